"""Sequential quadratic programming for the relaxed programs.

The solver is a damped-BFGS SQP with an L1 merit line search and an elastic
feasibility-restoration step for inconsistent linearizations.  Convergence
is declared only by the standalone :func:`kkt_residual` measure falling
below the tolerance, with candidate multipliers taken either from the last
quadratic subproblem or from a least-squares fit on the active constraint
gradients; the latter makes points that start exactly at a stationary point
(including saddle points of the underlying program) converge at iterate
zero with the correct multipliers.

Statuses: ``converged``, ``max-iter``, ``infeasible`` (restoration cannot
reduce a nonzero constraint violation), ``numerical-failure`` (divergence,
domain errors, or a collapsed line search).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import EvaluationDomainError
from .qp import solve_qp
from .regularize import SmoothNlp

__all__ = [
    "SolverOptions",
    "NlpSolution",
    "KsMultipliers",
    "EpsStationarityReport",
    "solve_nlp",
    "kkt_residual",
    "epsilon_stationarity_check",
]

_EPS_MACHINE = float(np.finfo(float).eps)


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for :func:`solve_nlp` (defaults fit desk-scale problems)."""

    max_iter: int = 200
    kkt_tol: float = 1e-9
    feas_tol: float = 1e-9
    armijo: float = 0.1
    damping: float = 0.2
    active_tol: float = 1e-8
    x_limit: float = 1e10
    f_limit: float = -1e14


@dataclass(frozen=True, eq=False)
class NlpSolution:
    """Result of one smooth solve, with multipliers in constraint order."""

    nlp: SmoothNlp
    x: np.ndarray
    f: float
    status: str  # converged | max-iter | infeasible | numerical-failure
    lam_ineq: np.ndarray
    lam_eq: np.ndarray
    iterations: int
    kkt_residual: float

    def multiplier(self, tag: tuple[str, int], kind: str | None = None) -> float:
        """Multiplier of the constraint carrying ``tag``.

        ``kind`` disambiguates ``side`` tags, which may appear both as an
        inequality and as an equality; by default inequalities win.
        """
        if kind in (None, "ineq"):
            for k, c in enumerate(self.nlp.ineq):
                if c.tag == tuple(tag):
                    return float(self.lam_ineq[k])
        if kind in (None, "eq"):
            for k, c in enumerate(self.nlp.eq):
                if c.tag == tuple(tag):
                    return float(self.lam_eq[k])
        raise KeyError(f"no constraint with tag {tag!r}")

    def multipliers_by_tag(self) -> dict:
        """Mapping ``(kind, label, index) -> multiplier`` for all constraints."""
        out = {}
        for k, c in enumerate(self.nlp.ineq):
            out[("ineq",) + c.tag] = float(self.lam_ineq[k])
        for k, c in enumerate(self.nlp.eq):
            out[("eq",) + c.tag] = float(self.lam_eq[k])
        return out


def _constraint_arrays(nlp: SmoothNlp, x: np.ndarray):
    n = nlp.n
    m_i, m_e = len(nlp.ineq), len(nlp.eq)
    c_in = np.empty(m_i)
    J_in = np.empty((m_i, n))
    for k, c in enumerate(nlp.ineq):
        c_in[k] = c.fun.value(x)
        J_in[k] = c.fun.grad(x)
    c_eq = np.empty(m_e)
    J_eq = np.empty((m_e, n))
    for k, c in enumerate(nlp.eq):
        c_eq[k] = c.fun.value(x)
        J_eq[k] = c.fun.grad(x)
    return c_in, J_in, c_eq, J_eq


def _residual_parts(g, c_in, J_in, lam_in, c_eq, J_eq, lam_eq):
    stat = g.copy()
    if len(c_in):
        stat -= J_in.T @ lam_in
    if len(c_eq):
        stat -= J_eq.T @ lam_eq
    stationarity = float(np.linalg.norm(stat, np.inf)) if len(stat) else 0.0
    feas = 0.0
    comp = 0.0
    sign = 0.0
    if len(c_in):
        feas = max(feas, float(np.max(-np.minimum(c_in, 0.0))))
        comp = float(np.max(np.abs(lam_in * c_in)))
        sign = float(np.max(-np.minimum(lam_in, 0.0)))
    if len(c_eq):
        feas = max(feas, float(np.max(np.abs(c_eq))))
    return max(stationarity, feas, comp, sign)


def kkt_residual(
    nlp: SmoothNlp, x: np.ndarray, lam_ineq: np.ndarray, lam_eq: np.ndarray
) -> float:
    """Karush-Kuhn-Tucker residual: max of stationarity, feasibility,
    complementarity, and multiplier-sign violations at ``(x, multipliers)``.

    Zero exactly at a KKT point with valid multipliers; this function is
    the sole convergence arbiter used by :func:`solve_nlp`.
    """
    x = np.asarray(x, dtype=float)
    lam_ineq = np.asarray(lam_ineq, dtype=float)
    lam_eq = np.asarray(lam_eq, dtype=float)
    g = nlp.objective.grad(x)
    c_in, J_in, c_eq, J_eq = _constraint_arrays(nlp, x)
    return _residual_parts(g, c_in, J_in, lam_ineq, c_eq, J_eq, lam_eq)


def _ls_multipliers(g, c_in, J_in, c_eq, J_eq, active_tol):
    """Least-squares multiplier estimate on the active set, clipped to signs."""
    m_i = len(c_in)
    active = [k for k in range(m_i) if c_in[k] <= active_tol]
    cols = []
    if active:
        cols.append(J_in[active])
    if len(c_eq):
        cols.append(J_eq)
    lam_in = np.zeros(m_i)
    lam_eq = np.zeros(len(c_eq))
    if not cols:
        return lam_in, lam_eq
    M = np.vstack(cols)
    sol, *_ = np.linalg.lstsq(M.T, g, rcond=None)
    for pos, k in enumerate(active):
        lam_in[k] = max(sol[pos], 0.0)
    if len(c_eq):
        lam_eq[:] = sol[len(active) :]
    return lam_in, lam_eq


def _viol1(c_in, c_eq) -> float:
    total = 0.0
    if len(c_in):
        total += float(np.sum(np.maximum(-c_in, 0.0)))
    if len(c_eq):
        total += float(np.sum(np.abs(c_eq)))
    return total


def _merit(nlp: SmoothNlp, x: np.ndarray, rho: float) -> float:
    f = nlp.objective.value(x)
    total = 0.0
    for c in nlp.ineq:
        total += max(-c.fun.value(x), 0.0)
    for c in nlp.eq:
        total += abs(c.fun.value(x))
    return f + rho * total


def _elastic_step(B, g, c_in, J_in, c_eq, J_eq, rho):
    """Relaxed subproblem with slack variables on every constraint row.

    Returns ``(d, lam_in, lam_eq, predicted_violation, ok)``.
    """
    n = B.shape[0]
    m_i, m_e = len(c_in), len(c_eq)
    n_z = n + m_i + 2 * m_e
    H = np.zeros((n_z, n_z))
    H[:n, :n] = B
    H[n:, n:] = 1e-6 * np.eye(m_i + 2 * m_e)
    c_z = np.concatenate([g, rho * np.ones(m_i + 2 * m_e)])
    # inequality rows J d + s >= -c, then slack bounds s >= 0
    A_in = np.zeros((2 * m_i + 2 * m_e, n_z))
    b_in = np.zeros(2 * m_i + 2 * m_e)
    A_in[:m_i, :n] = J_in
    A_in[:m_i, n : n + m_i] = np.eye(m_i)
    b_in[:m_i] = -c_in
    A_in[m_i:, n:] = np.eye(m_i + 2 * m_e)
    A_eq = np.zeros((m_e, n_z))
    A_eq[:, :n] = J_eq
    A_eq[:, n + m_i : n + m_i + m_e] = np.eye(m_e)
    A_eq[:, n + m_i + m_e :] = -np.eye(m_e)
    b_eq = -c_eq
    res = solve_qp(H, c_z, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
    if res.status != "optimal":
        return np.zeros(n), np.zeros(m_i), np.zeros(m_e), _viol1(c_in, c_eq), False
    pred = float(np.sum(res.d[n:]))
    return res.d[:n], res.lam_in[:m_i], res.lam_eq, max(pred, 0.0), True


def solve_nlp(
    nlp: SmoothNlp, x0: np.ndarray | None = None, options: SolverOptions | None = None
) -> NlpSolution:
    """Solve a relaxed program from ``x0`` (default: the problem's start)."""
    opts = options or SolverOptions()
    x = np.array(
        nlp.problem.start_array if x0 is None else np.asarray(x0, dtype=float)
    )
    if x.shape != (nlp.n,):
        raise ValueError(f"start point must have shape ({nlp.n},)")
    n = nlp.n
    m_i, m_e = len(nlp.ineq), len(nlp.eq)
    B = np.eye(n)
    rho = 1.0
    lam_in = np.zeros(m_i)
    lam_eq = np.zeros(m_e)
    have_mults = False
    qp_mults = None
    reset_done = False
    qp_failures = 0
    status = "max-iter"
    iterations = 0
    kkt_res = np.inf

    def finish(st, k, res):
        return NlpSolution(
            nlp=nlp,
            x=x,
            f=nlp.objective.value(x) if np.all(np.isfinite(x)) else np.nan,
            status=st,
            lam_ineq=lam_in,
            lam_eq=lam_eq,
            iterations=k,
            kkt_residual=res,
        )

    for k in range(opts.max_iter + 1):
        try:
            f = nlp.objective.value(x)
            g = nlp.objective.grad(x)
            c_in, J_in, c_eq, J_eq = _constraint_arrays(nlp, x)
        except EvaluationDomainError:
            return finish("numerical-failure", k, kkt_res)
        if not (
            np.isfinite(f)
            and np.all(np.isfinite(g))
            and np.all(np.isfinite(c_in))
            and np.all(np.isfinite(c_eq))
        ):
            return finish("numerical-failure", k, kkt_res)

        candidates = []
        if have_mults:
            candidates.append((lam_in, lam_eq))
        if qp_mults is not None:
            # When near-duplicate active gradients defeat the clipped
            # least-squares estimate, the subproblem multipliers are the
            # only certificate for a zero step at an optimum.
            candidates.append(qp_mults)
        candidates.append(_ls_multipliers(g, c_in, J_in, c_eq, J_eq, opts.active_tol))
        best = min(
            candidates,
            key=lambda cand: _residual_parts(g, c_in, J_in, cand[0], c_eq, J_eq, cand[1]),
        )
        kkt_res = _residual_parts(g, c_in, J_in, best[0], c_eq, J_eq, best[1])
        lam_in, lam_eq = best
        have_mults = True
        if kkt_res <= opts.kkt_tol:
            return finish("converged", k, kkt_res)
        if k == opts.max_iter:
            return finish("max-iter", k, kkt_res)
        if np.linalg.norm(x, np.inf) > opts.x_limit or f < opts.f_limit:
            return finish("numerical-failure", k, kkt_res)

        qp = solve_qp(B, g, A_eq=J_eq, b_eq=-c_eq, A_in=J_in, b_in=-c_in)
        pred_viol = 0.0
        if qp.status == "optimal":
            d, new_in, new_eq = qp.d, qp.lam_in, qp.lam_eq
            qp_failures = 0
        elif qp.status == "infeasible":
            d, new_in, new_eq, pred_viol, ok = _elastic_step(
                B, g, c_in, J_in, c_eq, J_eq, rho
            )
            if not ok:
                qp_failures += 1
                if qp_failures >= 2:
                    return finish("numerical-failure", k, kkt_res)
                B = np.eye(n)
                continue
            qp_failures = 0
            viol_now = _viol1(c_in, c_eq)
            no_progress_tol = 1e-10 * max(1.0, viol_now)
            if pred_viol >= viol_now - no_progress_tol:
                # the step trades no violation away; insist on pure
                # restoration with a heavy penalty before giving up
                d, new_in, new_eq, pred_viol, ok = _elastic_step(
                    B, g, c_in, J_in, c_eq, J_eq, 100.0 * rho
                )
                stalled = not ok or pred_viol >= viol_now - no_progress_tol
                if stalled and viol_now > opts.feas_tol:
                    return finish("infeasible", k, kkt_res)
        else:
            qp_failures += 1
            if qp_failures >= 2:
                return finish("numerical-failure", k, kkt_res)
            B = np.eye(n)
            continue

        qp_mults = (new_in.copy(), new_eq.copy())
        mult_norm = 0.0
        if len(new_in):
            mult_norm = max(mult_norm, float(np.max(np.abs(new_in))))
        if len(new_eq):
            mult_norm = max(mult_norm, float(np.max(np.abs(new_eq))))
        rho = max(rho, 1.1 * mult_norm + 0.1)
        viol_x = _viol1(c_in, c_eq)
        descent = g @ d - rho * (viol_x - pred_viol)
        if descent > 0 and viol_x - pred_viol > 1e-12:
            rho = 2.0 * (g @ d) / (viol_x - pred_viol) + 1.0
            descent = g @ d - rho * (viol_x - pred_viol)

        phi0 = f + rho * viol_x
        alpha = 1.0
        accepted = False
        while alpha >= 1e-14:
            x_t = x + alpha * d
            if np.array_equal(x_t, x):
                # the step no longer moves the iterate; accepting it would
                # spin the outer loop in place
                break
            try:
                phi_t = _merit(nlp, x_t, rho)
            except EvaluationDomainError:
                alpha *= 0.5
                continue
            if np.isfinite(phi_t) and phi_t <= phi0 + opts.armijo * alpha * descent:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if not reset_done:
                reset_done = True
                B = np.eye(n)
                continue
            return finish("numerical-failure", k, kkt_res)

        x_new = x + alpha * d
        try:
            g_new = nlp.objective.grad(x_new)
            _, J_in_new, _, J_eq_new = _constraint_arrays(nlp, x_new)
        except EvaluationDomainError:
            return finish("numerical-failure", k + 1, kkt_res)

        def lagr_grad(grad_f, Ji, Je):
            out = grad_f.copy()
            if m_i:
                out -= Ji.T @ new_in
            if m_e:
                out -= Je.T @ new_eq
            return out

        s = x_new - x
        y = lagr_grad(g_new, J_in_new, J_eq_new) - lagr_grad(g, J_in, J_eq)
        Bs = B @ s
        sBs = float(s @ Bs)
        if sBs > 1e-30 and float(s @ s) > 1e-30:
            sy = float(s @ y)
            if sy < opts.damping * sBs:
                theta = (1.0 - opts.damping) * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = float(s @ y)
            if sy > 1e-12 * sBs:
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
                B = 0.5 * (B + B.T)

        x = x_new
        lam_in, lam_eq = new_in, new_eq
        iterations = k + 1
    return finish(status, iterations, kkt_res)


# ---------------------------------------------------------------------------
# Approximate stationarity for the corner relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KsMultipliers:
    """Multipliers for the corner relaxation's untransformed system.

    ``mu[j]`` belongs to the constraint ``Phi_j <= 0``, ``mu1[j]`` /
    ``mu2[j]`` to the factor bounds ``F1_j >= 0`` / ``F2_j >= 0``;
    optional blocks cover side constraints.
    """

    mu: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    side_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    side_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class EpsStationarityReport:
    """Outcome of the four-part approximate-stationarity test."""

    eps: float
    stationarity: float
    feasibility: float
    sign: float
    complementarity: float
    ok_stationarity: bool
    ok_feasibility: bool
    ok_sign: bool
    ok_complementarity: bool

    @property
    def ok(self) -> bool:
        return (
            self.ok_stationarity
            and self.ok_feasibility
            and self.ok_sign
            and self.ok_complementarity
        )


def _within(value: float, eps: float) -> bool:
    # guard the comparison against the last-place rounding of values that sit
    # exactly on the threshold
    slack = 4.0 * _EPS_MACHINE * max(1.0, abs(value), abs(eps))
    return value <= eps + slack


def epsilon_stationarity_check(
    nlp: SmoothNlp, x: np.ndarray, mults: KsMultipliers, eps: float
) -> EpsStationarityReport:
    """Four-part approximate-stationarity test for a corner relaxation.

    Checks, each up to ``eps``: (1) the stationarity residual of the
    untransformed system, (2) primal feasibility, (3) multiplier signs, and
    (4) complementarity products.  ``nlp`` must come from
    :func:`~mpccreg.regularize.kanzow_schwartz`.
    """
    if nlp.family != "ks":
        raise ValueError(f"expected a corner-relaxation program, got {nlp.family!r}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = np.asarray(x, dtype=float)
    n_pairs = nlp.problem.n_pairs
    mu = np.asarray(mults.mu, dtype=float)
    mu1 = np.asarray(mults.mu1, dtype=float)
    mu2 = np.asarray(mults.mu2, dtype=float)
    if mu.shape != (n_pairs,) or mu1.shape != (n_pairs,) or mu2.shape != (n_pairs,):
        raise ValueError(f"multiplier blocks must have shape ({n_pairs},)")
    side_in = [c for c in nlp.ineq if c.tag[0] == "side"]
    side_eq = [c for c in nlp.eq if c.tag[0] == "side"]
    lam_g = np.asarray(mults.side_ineq, dtype=float)
    lam_h = np.asarray(mults.side_eq, dtype=float)
    if lam_g.size == 0:
        lam_g = np.zeros(len(side_in))
    if lam_h.size == 0:
        lam_h = np.zeros(len(side_eq))

    stat = nlp.objective.grad(x)
    feas = 0.0
    comp = 0.0
    for j in range(n_pairs):
        ks = nlp.find("ks-phi", j)[0].fun
        f1 = nlp.find("lower-F1", j)[0].fun
        f2 = nlp.find("lower-F2", j)[0].fun
        phi = ks.phi_value(x)
        v1 = f1.value(x)
        v2 = f2.value(x)
        stat = stat + mu[j] * ks.phi_grad(x) - mu1[j] * f1.grad(x) - mu2[j] * f2.grad(x)
        feas = max(feas, phi, -v1, -v2)
        comp = max(comp, abs(mu[j] * phi), abs(mu1[j] * v1), abs(mu2[j] * v2))
    for i, c in enumerate(side_in):
        v = c.fun.value(x)
        stat = stat - lam_g[i] * c.fun.grad(x)
        feas = max(feas, -v)
        comp = max(comp, abs(lam_g[i] * v))
    for i, c in enumerate(side_eq):
        stat = stat - lam_h[i] * c.fun.grad(x)
        feas = max(feas, abs(c.fun.value(x)))

    stationarity = float(np.linalg.norm(stat, np.inf))
    signs = [-float(np.min(mu, initial=0.0)), -float(np.min(mu1, initial=0.0)),
             -float(np.min(mu2, initial=0.0))]
    if lam_g.size:
        signs.append(-float(np.min(lam_g)))
    sign = max(0.0, *signs)
    return EpsStationarityReport(
        eps=eps,
        stationarity=stationarity,
        feasibility=max(feas, 0.0),
        sign=sign,
        complementarity=comp,
        ok_stationarity=_within(stationarity, eps),
        ok_feasibility=_within(feas, eps),
        ok_sign=_within(sign, eps),
        ok_complementarity=_within(comp, eps),
    )
