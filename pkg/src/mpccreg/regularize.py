"""Parameterized relaxations of complementarity constraints.

Each builder takes an :class:`~mpccreg.model.MpccProblem` and a parameter
``t > 0`` and produces a smooth (or piecewise-smooth) nonlinear program whose
feasible set relaxes the complementarity set and shrinks back onto it as
``t`` tends to zero. Four families are provided:

``scholtes``
    caps each product: ``F1_j * F2_j <= t`` together with ``F1_j, F2_j >= 0``.
``kanzow_schwartz``
    one piecewise-quadratic inequality per pair built from :func:`ks_phi`,
    shifted so the corner sits at ``(t, t)``.
``disjunctive``
    keeps the kink: ``max(t - F1_j, t - F2_j) >= 0``, i.e. at least one
    factor of every pair must stay at or below ``t``.  Branch selections
    yield ordinary smooth programs via :meth:`DisjunctiveNlp.branch_nlp`.
``quadrant_penalty``
    a single smooth equality per pair, ``g_beta(F1_j - t, t - F2_j) = 0``,
    whose zero set is exactly the disjunctive region.

Every generated constraint carries a provenance tag ``(label, index)`` so
that downstream multiplier bookkeeping can map solver output back to the
pair (or side constraint) it came from.

Inequalities are normalized to ``c(x) >= 0`` and equalities to ``c(x) = 0``.
In particular the kanzow_schwartz constraint ``Phi_j <= 0`` is stored as
``-Phi_j >= 0``; its multiplier then matches the usual sign convention for
the untransformed constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Expression, const, evaluate as eval_expr, gradient_exprs, mul, sub
from .model import (
    ClassificationRefusedError,
    MpccProblem,
    constraint_values,
    DEFAULT_ACTIVITY_TOL,
)

__all__ = [
    "Constraint",
    "SmoothNlp",
    "DisjunctiveNlp",
    "DisjActiveSets",
    "ks_phi",
    "quadrant_penalty_g",
    "quadrant_penalty_g_grad",
    "scholtes",
    "kanzow_schwartz",
    "disjunctive",
    "quadrant_penalty",
    "disj_active_sets",
    "membership_scholtes",
    "membership_ks",
    "membership_disjunctive",
    "membership_qpf",
    "membership_mpcc",
]

DEFAULT_BETA = 2.0


# ---------------------------------------------------------------------------
# Piecewise scalar building blocks
# ---------------------------------------------------------------------------


def ks_phi(a: float, b: float) -> tuple[float, np.ndarray]:
    """Piecewise corner function and its gradient with respect to ``(a, b)``.

    Returns ``a * b`` when ``a + b >= 0`` and ``-(a^2 + b^2) / 2`` otherwise.
    The two branches agree in value and first derivatives along the switching
    line ``a + b = 0``, and the sign of the result classifies the quadrant:
    nonpositive exactly when ``min(a, b) <= 0``.
    """
    if a + b >= 0.0:
        return a * b, np.array([b, a])
    return -0.5 * (a * a + b * b), np.array([-a, -b])


def _phi_values(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.where(A + B >= 0.0, A * B, -0.5 * (A * A + B * B))


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 1.0:
        raise ValueError(f"beta must be greater than 1, got {beta}")
    return beta


def quadrant_penalty_g(u: float, v: float, beta: float = DEFAULT_BETA) -> float:
    """Continuously differentiable penalty for the quadrant ``u > 0 > v``.

    Zero whenever ``u <= 0`` or ``v >= 0`` and strictly positive inside the
    open quadrant, where it is pieced together from ``u^2``, ``v^2`` and a
    blending quadratic on the middle wedge ``-v / beta < u < -beta * v``.
    """
    beta = _check_beta(beta)
    if u <= 0.0 or v >= 0.0:
        return 0.0
    if beta * u <= -v:
        return u * u
    if u >= -beta * v:
        return v * v
    return (u * u + 2.0 * beta * u * v + v * v) / (1.0 - beta * beta)


def quadrant_penalty_g_grad(
    u: float, v: float, beta: float = DEFAULT_BETA
) -> tuple[float, float]:
    """Gradient of :func:`quadrant_penalty_g` with respect to ``(u, v)``."""
    beta = _check_beta(beta)
    if u <= 0.0 or v >= 0.0:
        return 0.0, 0.0
    if beta * u <= -v:
        return 2.0 * u, 0.0
    if u >= -beta * v:
        return 0.0, 2.0 * v
    d = 1.0 - beta * beta
    return (2.0 * u + 2.0 * beta * v) / d, (2.0 * beta * u + 2.0 * v) / d


def _g_values(U: np.ndarray, V: np.ndarray, beta: float) -> np.ndarray:
    beta = _check_beta(beta)
    zero = (U <= 0.0) | (V >= 0.0)
    lo = beta * U <= -V
    hi = U >= -beta * V
    mid_val = (U * U + 2.0 * beta * U * V + V * V) / (1.0 - beta * beta)
    out = np.select([zero, lo, hi], [0.0, U * U, V * V], default=mid_val)
    return out


# ---------------------------------------------------------------------------
# Constraint functions with provenance
# ---------------------------------------------------------------------------


class _ExprFun:
    """Value/gradient/batch evaluation for one expression tree."""

    __slots__ = ("expr", "grad_exprs", "n")

    def __init__(self, expr: Expression, n: int):
        self.expr = expr
        self.grad_exprs = gradient_exprs(expr, n)
        self.n = n

    def value(self, x: np.ndarray) -> float:
        return eval_expr(self.expr, x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.array([eval_expr(d, x) for d in self.grad_exprs])

    def values(self, X: np.ndarray) -> np.ndarray:
        return eval_expr(self.expr, X)


class _KsFun:
    """The constraint ``-Phi_j(x, t) >= 0`` for one complementarity pair.

    ``Phi_j(x, t) = phi(F1_j(x) - t, F2_j(x) - t)`` with :func:`ks_phi`.
    """

    __slots__ = ("f1", "f2", "t")

    def __init__(self, f1: _ExprFun, f2: _ExprFun, t: float):
        self.f1 = f1
        self.f2 = f2
        self.t = t

    def phi_value(self, x: np.ndarray) -> float:
        return ks_phi(self.f1.value(x) - self.t, self.f2.value(x) - self.t)[0]

    def phi_grad(self, x: np.ndarray) -> np.ndarray:
        _, (da, db) = ks_phi(self.f1.value(x) - self.t, self.f2.value(x) - self.t)
        return da * self.f1.grad(x) + db * self.f2.grad(x)

    def value(self, x: np.ndarray) -> float:
        return -self.phi_value(x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return -self.phi_grad(x)

    def values(self, X: np.ndarray) -> np.ndarray:
        return -_phi_values(self.f1.values(X) - self.t, self.f2.values(X) - self.t)


class _QpfFun:
    """The equality ``g_beta(F1_j(x) - t, t - F2_j(x)) = 0`` for one pair."""

    __slots__ = ("f1", "f2", "t", "beta")

    def __init__(self, f1: _ExprFun, f2: _ExprFun, t: float, beta: float):
        self.f1 = f1
        self.f2 = f2
        self.t = t
        self.beta = beta

    def _uv(self, x: np.ndarray) -> tuple[float, float]:
        return self.f1.value(x) - self.t, self.t - self.f2.value(x)

    def value(self, x: np.ndarray) -> float:
        u, v = self._uv(x)
        return quadrant_penalty_g(u, v, self.beta)

    def grad(self, x: np.ndarray) -> np.ndarray:
        u, v = self._uv(x)
        gu, gv = quadrant_penalty_g_grad(u, v, self.beta)
        return gu * self.f1.grad(x) - gv * self.f2.grad(x)

    def values(self, X: np.ndarray) -> np.ndarray:
        U = self.f1.values(X) - self.t
        V = self.t - self.f2.values(X)
        return _g_values(U, V, self.beta)


@dataclass(frozen=True, eq=False)
class Constraint:
    """One scalar constraint together with its provenance tag.

    ``tag`` is a pair ``(label, index)``; labels used by the builders are
    ``scholtes-product``, ``ks-phi``, ``qpf-penalty``, ``branch-A``,
    ``branch-B``, ``lower-F1``, ``lower-F2`` (indexed by pair) and ``side``
    (indexed into the problem's side constraint list).  Inequalities mean
    ``fun(x) >= 0``, equalities ``fun(x) = 0``.
    """

    tag: tuple[str, int]
    fun: object  # _ExprFun | _KsFun | _QpfFun


@dataclass(frozen=True, eq=False)
class SmoothNlp:
    """A relaxed nonlinear program ready for a smooth solver.

    ``family`` records which builder produced it (``scholtes``, ``ks``,
    ``qpf`` or ``branch``); ``pattern`` is the branch string for family
    ``branch`` and ``None`` otherwise.
    """

    problem: MpccProblem
    family: str
    t: float
    n: int
    objective: _ExprFun
    ineq: tuple[Constraint, ...]
    eq: tuple[Constraint, ...]
    beta: float | None = None
    pattern: str | None = None

    def find(self, label: str, index: int | None = None):
        """All constraints whose tag matches ``label`` (and ``index``)."""
        out = [
            c
            for c in self.ineq + self.eq
            if c.tag[0] == label and (index is None or c.tag[1] == index)
        ]
        return out


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0.0:
        raise ValueError(f"relaxation parameter t must be positive, got {t}")
    return t


def _pair_funs(p: MpccProblem) -> tuple[list[_ExprFun], list[_ExprFun]]:
    f1 = [_ExprFun(a, p.n) for a, _ in p.pairs]
    f2 = [_ExprFun(b, p.n) for _, b in p.pairs]
    return f1, f2


def _bound_constraints(p: MpccProblem, f1, f2) -> list[Constraint]:
    out = []
    for j in range(p.n_pairs):
        out.append(Constraint(("lower-F1", j), f1[j]))
        out.append(Constraint(("lower-F2", j), f2[j]))
    return out


def _side_ineq(p: MpccProblem) -> list[Constraint]:
    return [
        Constraint(("side", i), _ExprFun(e, p.n)) for i, e in enumerate(p.side_ineq)
    ]


def _side_eq(p: MpccProblem) -> list[Constraint]:
    return [Constraint(("side", i), _ExprFun(e, p.n)) for i, e in enumerate(p.side_eq)]


def scholtes(p: MpccProblem, t: float) -> SmoothNlp:
    """Product-cap relaxation: ``F1_j * F2_j <= t`` plus factor bounds."""
    t = _check_t(t)
    f1, f2 = _pair_funs(p)
    ineq = [
        Constraint(
            ("scholtes-product", j),
            _ExprFun(sub(const(t), mul(p.pairs[j][0], p.pairs[j][1])), p.n),
        )
        for j in range(p.n_pairs)
    ]
    ineq += _bound_constraints(p, f1, f2)
    ineq += _side_ineq(p)
    return SmoothNlp(
        problem=p,
        family="scholtes",
        t=t,
        n=p.n,
        objective=_ExprFun(p.objective, p.n),
        ineq=tuple(ineq),
        eq=tuple(_side_eq(p)),
    )


def kanzow_schwartz(p: MpccProblem, t: float) -> SmoothNlp:
    """Corner relaxation with one piecewise constraint per pair."""
    t = _check_t(t)
    f1, f2 = _pair_funs(p)
    ineq = [
        Constraint(("ks-phi", j), _KsFun(f1[j], f2[j], t)) for j in range(p.n_pairs)
    ]
    ineq += _bound_constraints(p, f1, f2)
    ineq += _side_ineq(p)
    return SmoothNlp(
        problem=p,
        family="ks",
        t=t,
        n=p.n,
        objective=_ExprFun(p.objective, p.n),
        ineq=tuple(ineq),
        eq=tuple(_side_eq(p)),
    )


def quadrant_penalty(p: MpccProblem, t: float, beta: float = DEFAULT_BETA) -> SmoothNlp:
    """Penalty-equality relaxation: ``g_beta(F1_j - t, t - F2_j) = 0``."""
    t = _check_t(t)
    beta = _check_beta(beta)
    f1, f2 = _pair_funs(p)
    eq = [
        Constraint(("qpf-penalty", j), _QpfFun(f1[j], f2[j], t, beta))
        for j in range(p.n_pairs)
    ]
    eq += _side_eq(p)
    ineq = _bound_constraints(p, f1, f2) + _side_ineq(p)
    return SmoothNlp(
        problem=p,
        family="qpf",
        t=t,
        n=p.n,
        objective=_ExprFun(p.objective, p.n),
        ineq=tuple(ineq),
        eq=tuple(eq),
        beta=beta,
    )


@dataclass(frozen=True, eq=False)
class DisjunctiveNlp:
    """The kinked relaxation ``max(t - F1_j, t - F2_j) >= 0`` for every pair.

    Not itself a smooth program; fixing one branch per pair via
    :meth:`branch_nlp` yields an ordinary :class:`SmoothNlp`.
    """

    problem: MpccProblem
    t: float

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def n_pairs(self) -> int:
        return self.problem.n_pairs

    def branch_nlp(self, pattern: str) -> SmoothNlp:
        """Smooth program for one branch selection.

        ``pattern`` has one character per pair: ``A`` enforces
        ``F1_j <= t``, ``B`` enforces ``F2_j <= t``; the factor bounds
        ``F1_j, F2_j >= 0`` are kept in either case.
        """
        p = self.problem
        pattern = str(pattern)
        if len(pattern) != p.n_pairs or any(ch not in "AB" for ch in pattern):
            raise ValueError(
                f"pattern must be a string of 'A'/'B' of length {p.n_pairs}, "
                f"got {pattern!r}"
            )
        f1, f2 = _pair_funs(p)
        ineq = []
        for j, ch in enumerate(pattern):
            expr = p.pairs[j][0] if ch == "A" else p.pairs[j][1]
            label = "branch-A" if ch == "A" else "branch-B"
            ineq.append(
                Constraint((label, j), _ExprFun(sub(const(self.t), expr), p.n))
            )
        ineq += _bound_constraints(p, f1, f2)
        ineq += _side_ineq(p)
        return SmoothNlp(
            problem=p,
            family="branch",
            t=self.t,
            n=p.n,
            objective=_ExprFun(p.objective, p.n),
            ineq=tuple(ineq),
            eq=tuple(_side_eq(p)),
            pattern=pattern,
        )


def disjunctive(p: MpccProblem, t: float) -> DisjunctiveNlp:
    """Relaxation that keeps, per pair, the union of the two branch half-spaces."""
    return DisjunctiveNlp(problem=p, t=_check_t(t))


@dataclass(frozen=True)
class DisjActiveSets:
    """Active structure of a point feasible for the disjunctive relaxation.

    ``capped_both``: both factors sit at ``t``.  ``capped1``: the first factor sits at
    ``t`` while the second is strictly above.  ``capped2``: the mirror image.
    ``zero1`` / ``zero2``: the first / second factor vanishes.  The ``H`` sets are
    mutually exclusive; ``N`` membership is independent of them.  Indices
    are zero-based pair indices.
    """

    capped_both: tuple[int, ...]
    capped1: tuple[int, ...]
    capped2: tuple[int, ...]
    zero1: tuple[int, ...]
    zero2: tuple[int, ...]
    tol: float


def _disj_violation(p: MpccProblem, t: float, x: np.ndarray) -> float:
    F1, F2, G, H = constraint_values(p, x)
    f1, f2 = F1[:, 0], F2[:, 0]
    worst = float(np.max(np.maximum(0.0, np.minimum(f1, f2) - t), initial=0.0))
    worst = max(worst, float(np.max(-np.minimum(0.0, f1), initial=0.0)))
    worst = max(worst, float(np.max(-np.minimum(0.0, f2), initial=0.0)))
    if G.size:
        worst = max(worst, float(np.max(-np.minimum(0.0, G))))
    if H.size:
        worst = max(worst, float(np.max(np.abs(H))))
    return worst


def disj_active_sets(
    disj: DisjunctiveNlp, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> DisjActiveSets:
    """Classify which branch constraints and factor bounds are active at ``x``.

    Raises :class:`~mpccreg.model.ClassificationRefusedError` when ``x``
    violates the disjunctive relaxation's feasible set by more than ``tol``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    p, t = disj.problem, disj.t
    x = np.asarray(x, dtype=float)
    violation = _disj_violation(p, t, x)
    if violation > tol:
        raise ClassificationRefusedError(violation, tol)
    F1, F2, _, _ = constraint_values(p, x)
    f1, f2 = F1[:, 0], F2[:, 0]
    capped_both, capped1, capped2, zero1, zero2 = [], [], [], [], []
    for j in range(p.n_pairs):
        at1 = abs(f1[j] - t) <= tol
        at2 = abs(f2[j] - t) <= tol
        if at1 and at2:
            capped_both.append(j)
        elif at1 and f2[j] > t + tol:
            capped1.append(j)
        elif at2 and f1[j] > t + tol:
            capped2.append(j)
        if abs(f1[j]) <= tol:
            zero1.append(j)
        if abs(f2[j]) <= tol:
            zero2.append(j)
    return DisjActiveSets(
        capped_both=tuple(capped_both), capped1=tuple(capped1), capped2=tuple(capped2), zero1=tuple(zero1), zero2=tuple(zero2), tol=tol
    )


# ---------------------------------------------------------------------------
# Feasible-set membership (vectorized)
# ---------------------------------------------------------------------------


def _membership(p: MpccProblem, X, tol: float, pair_test):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    F1, F2, G, H = constraint_values(p, X)
    ok = (F1 >= -tol).all(axis=0) & (F2 >= -tol).all(axis=0)
    ok &= pair_test(F1, F2).all(axis=0)
    ok &= (G >= -tol).all(axis=0)
    ok &= (np.abs(H) <= tol).all(axis=0)
    return bool(ok[0]) if single else ok


def membership_scholtes(p: MpccProblem, t: float, X, tol: float = 0.0):
    """Whether points satisfy the product-cap relaxation at parameter ``t``."""
    t = _check_t(t)
    return _membership(p, X, tol, lambda F1, F2: F1 * F2 <= t + tol)


def membership_ks(p: MpccProblem, t: float, X, tol: float = 0.0):
    """Whether points satisfy the corner relaxation at parameter ``t``."""
    t = _check_t(t)
    return _membership(
        p, X, tol, lambda F1, F2: _phi_values(F1 - t, F2 - t) <= tol
    )


def membership_disjunctive(p: MpccProblem, t: float, X, tol: float = 0.0):
    """Whether points satisfy the disjunctive relaxation at parameter ``t``."""
    t = _check_t(t)
    return _membership(p, X, tol, lambda F1, F2: np.minimum(F1, F2) <= t + tol)


def membership_qpf(
    p: MpccProblem, t: float, X, tol: float = 0.0, beta: float = DEFAULT_BETA
):
    """Whether points satisfy the penalty-equality relaxation at ``t``."""
    t = _check_t(t)
    beta = _check_beta(beta)
    return _membership(
        p, X, tol, lambda F1, F2: _g_values(F1 - t, t - F2, beta) <= tol
    )


def membership_mpcc(p: MpccProblem, X, tol: float = 0.0):
    """Whether points satisfy the complementarity constraints themselves."""
    return _membership(
        p, X, tol, lambda F1, F2: np.abs(np.minimum(F1, F2)) <= tol
    )
