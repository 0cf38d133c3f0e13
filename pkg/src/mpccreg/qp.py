"""Dense convex quadratic programming by a primal active-set method.

Solves ``min 0.5 d'Hd + c'd`` subject to ``A_eq d = b_eq`` and
``A_in d >= b_in`` for a symmetric positive-definite ``H``.  Problem sizes
here are tiny (a handful of variables and a few dozen constraints), so the
implementation favors robustness over factorization updates: every
equality-constrained subproblem is solved from scratch via a least-squares
KKT solve, infeasible starts go through an elastic phase-one program, and a
stalled working-set iteration falls back to enumerating candidate active
subsets, which is exact for strictly convex programs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = ["QpResult", "solve_qp"]


@dataclass(frozen=True, eq=False)
class QpResult:
    """Solution of one quadratic program.

    ``lam_in`` holds one multiplier per inequality row; rows that are not in
    the final working set carry an exact zero.  ``status`` is one of
    ``optimal``, ``infeasible`` or ``failed``.
    """

    d: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    status: str
    iterations: int


def _eqp_step(H: np.ndarray, g: np.ndarray, A: np.ndarray):
    """Minimize ``0.5 p'Hp + g'p`` subject to ``A p = 0``; returns (p, lam)."""
    n = H.shape[0]
    m = A.shape[0]
    if m == 0:
        p, *_ = np.linalg.lstsq(H, -g, rcond=None)
        return p, np.zeros(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = -A.T  # stationarity H p + g = A' lam
    K[n:, :n] = A
    rhs = np.concatenate([-g, np.zeros(m)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def _kkt_solve(H, c, A, b):
    """Solve the KKT system for equality constraints ``A x = b`` directly.

    Returns ``(x, lam)`` or ``(None, None)`` when the system is inconsistent.
    """
    n = H.shape[0]
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = -A.T  # stationarity H x + c = A' lam
    K[n:, :n] = A
    rhs = np.concatenate([-c, b])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    scale = 1.0 + np.linalg.norm(rhs, np.inf) + np.linalg.norm(sol, np.inf)
    if np.linalg.norm(K @ sol - rhs, np.inf) > 1e-7 * scale:
        return None, None
    return sol[:n], sol[n:]


def _active_set_loop(H, c, A_eq, b_eq, A_in, b_in, x0, W0, max_iter):
    """Primal active-set iteration from a feasible point ``x0``.

    Returns ``(x, lam_eq, lam_in, status, iterations)`` where status is
    ``optimal`` or ``stalled``.
    """
    n = H.shape[0]
    m_e = A_eq.shape[0]
    m_i = A_in.shape[0]
    x = x0.astype(float).copy()
    W = sorted(W0)
    zero_steps = 0

    def q(y):
        return 0.5 * y @ H @ y + c @ y

    for it in range(max_iter):
        rows = [A_eq] if m_e else []
        if W:
            rows.append(A_in[W])
        A_W = np.vstack(rows) if rows else np.zeros((0, n))
        g = H @ x + c
        p, lam = _eqp_step(H, g, A_W)
        step = np.linalg.norm(p, np.inf)
        at_minimum = step <= 1e-11 * (1.0 + np.linalg.norm(x, np.inf))
        alpha = 1.0
        blocker = None
        if not at_minimum:
            # ratio test against constraints outside the working set
            for i in range(m_i):
                if i in W:
                    continue
                a_p = A_in[i] @ p
                if a_p >= -1e-13 * (1.0 + step):
                    continue
                slack = max(A_in[i] @ x - b_in[i], 0.0)
                ratio = slack / (-a_p)
                if ratio < alpha:
                    alpha = ratio
                    blocker = i
            if blocker is None:
                # the exact subspace step decreases q by 0.5 p'Hp; when even
                # that predicted decrease is rounding noise, p itself is noise
                if 0.5 * p @ H @ p <= 1e-16 * (1.0 + abs(q(x))):
                    at_minimum = True
                else:
                    x = x + p
                    zero_steps = 0
            else:
                x = x + alpha * p
                W.append(blocker)
                W.sort()
                if alpha <= 1e-14:
                    zero_steps += 1
                    if zero_steps > 10 * (m_i + m_e + 2):
                        return x, np.zeros(m_e), np.zeros(m_i), "stalled", it + 1
                else:
                    zero_steps = 0
        if at_minimum:
            lam_W = lam[m_e:]
            if not W or lam_W.min() >= -1e-10:
                lam_in = np.zeros(m_i)
                for k, i in enumerate(W):
                    lam_in[i] = lam_W[k]
                return x, lam[:m_e], lam_in, "optimal", it + 1
            worst = int(np.argmin(lam_W))
            del W[worst]
            zero_steps += 1
            if zero_steps > 10 * (m_i + m_e + 2):
                return x, lam[:m_e], np.zeros(m_i), "stalled", it + 1
    return x, np.zeros(m_e), np.zeros(m_i), "stalled", max_iter


def _enumerate_fallback(H, c, A_eq, b_eq, A_in, b_in):
    """Exact solve by trying candidate active subsets (strictly convex case)."""
    n = H.shape[0]
    m_i = A_in.shape[0]
    best = None
    for size in range(0, min(n, m_i) + 1):
        for S in itertools.combinations(range(m_i), size):
            A = np.vstack([A_eq, A_in[list(S)]])
            b = np.concatenate([b_eq, b_in[list(S)]])
            x, lam = _kkt_solve(H, c, A, b)
            if x is None:
                continue
            lam_S = lam[A_eq.shape[0] :]
            if lam_S.size and lam_S.min() < -1e-9:
                continue
            if m_i and np.min(A_in @ x - b_in) < -1e-8 * (1 + np.linalg.norm(x, np.inf)):
                continue
            f = 0.5 * x @ H @ x + c @ x
            if best is None or f < best[0]:
                lam_in = np.zeros(m_i)
                for k, i in enumerate(S):
                    lam_in[i] = lam_S[k]
                best = (f, x, lam[: A_eq.shape[0]], lam_in)
    return best


def solve_qp(
    H: np.ndarray,
    c: np.ndarray,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    A_in: np.ndarray | None = None,
    b_in: np.ndarray | None = None,
    feas_tol: float = 1e-12,
    max_iter: int | None = None,
) -> QpResult:
    """Solve ``min 0.5 d'Hd + c'd`` s.t. ``A_eq d = b_eq``, ``A_in d >= b_in``.

    ``H`` must be symmetric positive definite (the strictly convex case);
    the result's multipliers satisfy the KKT conditions with nonnegative
    inequality multipliers that are exactly zero off the active set.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = H.shape[0]
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_in = np.zeros((0, n)) if A_in is None else np.asarray(A_in, dtype=float)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    m_e, m_i = A_eq.shape[0], A_in.shape[0]
    if max_iter is None:
        max_iter = 100 * (m_e + m_i + 5)
    scale_b = 1.0 + max(
        np.linalg.norm(b_eq, np.inf) if m_e else 0.0,
        np.linalg.norm(b_in, np.inf) if m_i else 0.0,
    )

    # Equality consistency and a minimum-norm equality-feasible point.
    if m_e:
        x0, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
        if np.linalg.norm(A_eq @ x0 - b_eq, np.inf) > 1e-8 * scale_b:
            return QpResult(
                d=np.full(n, np.nan),
                lam_eq=np.zeros(m_e),
                lam_in=np.zeros(m_i),
                status="infeasible",
                iterations=0,
            )
    else:
        x0 = np.zeros(n)

    iterations = 0
    if m_i and np.min(A_in @ x0 - b_in) < -feas_tol * scale_b:
        x0, phase1_iters, feasible = _phase_one(A_eq, b_eq, A_in, b_in, x0, max_iter)
        iterations += phase1_iters
        if not feasible:
            return QpResult(
                d=np.full(n, np.nan),
                lam_eq=np.zeros(m_e),
                lam_in=np.zeros(m_i),
                status="infeasible",
                iterations=iterations,
            )
        if m_e:
            # re-center on the equality manifold after the elastic solve
            corr, *_ = np.linalg.lstsq(A_eq, b_eq - A_eq @ x0, rcond=None)
            x0 = x0 + corr

    W0 = [
        i
        for i in range(m_i)
        if abs(A_in[i] @ x0 - b_in[i]) <= 1e-9 * scale_b
    ]
    x, lam_eq, lam_in, status, its = _active_set_loop(
        H, c, A_eq, b_eq, A_in, b_in, x0, W0, max_iter
    )
    iterations += its
    if status == "optimal":
        return QpResult(
            d=x, lam_eq=lam_eq, lam_in=lam_in, status="optimal", iterations=iterations
        )

    best = _enumerate_fallback(H, c, A_eq, b_eq, A_in, b_in)
    if best is not None:
        _, x, lam_eq, lam_in = best
        return QpResult(
            d=x, lam_eq=lam_eq, lam_in=lam_in, status="optimal", iterations=iterations
        )
    return QpResult(
        d=np.full(n, np.nan),
        lam_eq=np.zeros(m_e),
        lam_in=np.zeros(m_i),
        status="failed",
        iterations=iterations,
    )


def _phase_one(A_eq, b_eq, A_in, b_in, x_eq, max_iter):
    """Elastic feasibility program: minimize total inequality slack.

    Variables are ``(d, s)`` with one slack per inequality row; equalities
    are carried over unchanged (the caller supplies an equality-consistent
    start). Returns ``(d, iterations, feasible)``.
    """
    n = A_in.shape[1]
    m_e = A_eq.shape[0]
    m_i = A_in.shape[0]
    n_z = n + m_i
    eps = 1e-4  # strict convexity only; small enough not to bias feasibility
    H = eps * np.eye(n_z)
    c = np.concatenate([np.zeros(n), np.ones(m_i)])
    A_eq_z = np.hstack([A_eq, np.zeros((m_e, m_i))]) if m_e else np.zeros((0, n_z))
    # rows: A_in d + s >= b_in, then s >= 0
    A_in_z = np.vstack(
        [
            np.hstack([A_in, np.eye(m_i)]),
            np.hstack([np.zeros((m_i, n)), np.eye(m_i)]),
        ]
    )
    b_in_z = np.concatenate([b_in, np.zeros(m_i)])
    s0 = np.maximum(b_in - A_in @ x_eq, 0.0)
    z0 = np.concatenate([x_eq, s0])
    # start with only the slack bounds active; the elastic rows for violated
    # constraints are tight by construction and would make the initial
    # working set degenerate
    active0 = [m_i + i for i in range(m_i) if s0[i] <= 1e-12]
    z, _, _, status, its = _active_set_loop(
        H, c, A_eq_z, b_eq, A_in_z, b_in_z, z0, active0, max_iter
    )
    scale = 1.0 + (np.linalg.norm(b_in, np.inf) if m_i else 0.0)

    def violation(d):
        return float(np.max(np.maximum(b_in - A_in @ d, 0.0), initial=0.0))

    if status != "optimal" and violation(z[:n]) > 1e-7 * scale:
        best = _enumerate_fallback(H, c, A_eq_z, b_eq, A_in_z, b_in_z)
        if best is not None:
            z = best[1]
    return z[:n], its, violation(z[:n]) <= 1e-7 * scale
