"""Branch enumeration and stationarity certificates for the kinked relaxation.

Each pair contributes the union of two half-spaces (``F1 <= t`` or
``F2 <= t``); fixing one choice per pair gives a smooth program.  The
solver enumerates all ``2^n_pairs`` branch programs (or one greedy choice),
keeps the best converged point that is feasible for the full union, and
certifies it: multipliers are recovered by least squares on the active
gradients, signs decide the C/M/S stationarity class, and a rank test on
the same gradients reports whether the certificate is unique.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import ClassificationRefusedError, MpccProblem, evaluate
from .nlp import NlpSolution, SolverOptions, solve_nlp
from .regularize import (
    DEFAULT_ACTIVITY_TOL,
    DisjActiveSets,
    DisjunctiveNlp,
    disj_active_sets,
)

__all__ = [
    "BranchPattern",
    "DisjMultipliers",
    "DisjSolution",
    "LicqReport",
    "ENUMERATION_CAP",
    "solve_disjunctive",
    "recover_disj_multipliers",
    "classify_disj_stationarity",
    "disj_licq",
]

ENUMERATION_CAP = 12
DEFAULT_SIGN_TOL = 1e-6


@dataclass(frozen=True, order=True)
class BranchPattern:
    """One half-space choice per pair: ``A`` keeps ``F1 <= t``, ``B`` keeps
    ``F2 <= t``."""

    choices: str

    def __post_init__(self):
        if not self.choices or any(ch not in "AB" for ch in self.choices):
            raise ValueError(
                f"pattern must be a nonempty string over 'A'/'B', got {self.choices!r}"
            )

    def __str__(self) -> str:
        return self.choices

    def __len__(self) -> int:
        return len(self.choices)

    def __iter__(self):
        return iter(self.choices)


@dataclass(frozen=True, eq=False)
class DisjMultipliers:
    """Stationarity multipliers keyed by the constraints they act on.

    ``cap1``/``cap2`` hold multipliers of the active relaxation caps
    (``F1 = t`` / ``F2 = t``, i.e. pairs in ``capped_both`` plus
    ``capped1``/``capped2`` respectively); ``floor1``/``floor2`` hold
    multipliers of vanishing factors (``zero1``/``zero2``); ``side_ineq``
    holds multipliers of active side inequalities, ``side_eq`` of side
    equalities.  ``residual`` is the least-squares defect of the recovery,
    ``reliable`` is False when the active gradients were rank deficient
    (the values are then a minimum-norm choice, not a unique certificate).
    """

    sets: DisjActiveSets
    cap1: dict = field(default_factory=dict)
    cap2: dict = field(default_factory=dict)
    floor1: dict = field(default_factory=dict)
    floor2: dict = field(default_factory=dict)
    side_ineq: dict = field(default_factory=dict)
    side_eq: dict = field(default_factory=dict)
    residual: float = 0.0
    reliable: bool = True

    def replace(self, **changes) -> "DisjMultipliers":
        return dataclasses.replace(self, **changes)

    def all_values(self):
        """All multiplier values with their (group, index) keys."""
        out = []
        for group in ("cap1", "cap2", "floor1", "floor2",
                      "side_ineq", "side_eq"):
            for k, v in getattr(self, group).items():
                out.append(((group, k), float(v)))
        return out


@dataclass(frozen=True)
class LicqReport:
    """Rank report on the active gradient family."""

    ok: bool
    rank: int
    n_gradients: int
    smallest_sv: float
    largest_sv: float


@dataclass(frozen=True, eq=False)
class DisjSolution:
    """Winner of a branch-enumeration solve with its certificate."""

    disj: DisjunctiveNlp
    x: np.ndarray
    f: float
    status: str  # converged | infeasible | numerical-failure | max-iter
    pattern: BranchPattern | None
    sets: DisjActiveSets | None
    multipliers: DisjMultipliers | None
    stationarity: str  # S | M | C | none | "" (when not certified)
    licq: LicqReport | None
    branch_statuses: dict
    iterations: int


def _active_side_indices(p: MpccProblem, rec, tol: float):
    return [i for i in range(len(p.side_ineq)) if rec.g[i] <= tol]


def _gradient_columns(p: MpccProblem, rec, sets: DisjActiveSets, tol: float):
    """Signed gradient columns of the stationarity system, with their keys."""
    cols, keys = [], []
    for j in sets.capped_both:
        cols.append(-rec.f1_grad[j])
        keys.append(("cap1", j))
        cols.append(-rec.f2_grad[j])
        keys.append(("cap2", j))
    for j in sets.capped1:
        cols.append(-rec.f1_grad[j])
        keys.append(("cap1", j))
    for j in sets.capped2:
        cols.append(-rec.f2_grad[j])
        keys.append(("cap2", j))
    for j in sets.zero1:
        cols.append(rec.f1_grad[j])
        keys.append(("floor1", j))
    for j in sets.zero2:
        cols.append(rec.f2_grad[j])
        keys.append(("floor2", j))
    for i in _active_side_indices(p, rec, tol):
        cols.append(rec.g_grad[i])
        keys.append(("side_ineq", i))
    for i in range(len(p.side_eq)):
        cols.append(rec.h_grad[i])
        keys.append(("side_eq", i))
    return cols, keys


def recover_disj_multipliers(
    disj: DisjunctiveNlp, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> DisjMultipliers:
    """Least-squares multipliers of the stationarity identity at ``x``.

    Raises :class:`~mpccreg.model.ClassificationRefusedError` when ``x`` is
    not feasible within ``tol``.  With linearly independent active
    gradients the solution is unique; otherwise the minimum-norm solution
    is returned with ``reliable=False``.
    """
    x = np.asarray(x, dtype=float)
    sets = disj_active_sets(disj, x, tol)
    p = disj.problem
    rec = evaluate(p, x)
    cols, keys = _gradient_columns(p, rec, sets, tol)
    groups: dict = {k: {} for k in (
        "cap1", "cap2", "floor1", "floor2", "side_ineq", "side_eq"
    )}
    if not cols:
        residual = float(np.linalg.norm(rec.objective_grad, np.inf))
        return DisjMultipliers(sets=sets, residual=residual, **groups)
    M = np.column_stack(cols)
    sol, _, rank, sv = np.linalg.lstsq(M, rec.objective_grad, rcond=None)
    residual = float(np.linalg.norm(M @ sol - rec.objective_grad, np.inf))
    for (group, k), value in zip(keys, sol):
        groups[group][k] = float(value)
    return DisjMultipliers(
        sets=sets,
        residual=residual,
        reliable=bool(rank == len(cols)),
        **groups,
    )


def classify_disj_stationarity(
    m: DisjMultipliers, sets: DisjActiveSets, tol: float = DEFAULT_SIGN_TOL
) -> str:
    """Stationarity class from multiplier signs: ``S``, ``M``, ``C`` or
    ``none``.

    All multipliers of active constraints must be nonnegative (within
    ``tol``) for class ``C``; ``M`` additionally needs one of each
    cap-multiplier couple on a doubly capped pair to vanish, ``S`` needs
    both.
    """
    # side equalities are sign-free; everything else must be nonnegative
    signed = [v for (group, _), v in m.all_values() if group != "side_eq"]
    if any(v < -tol for v in signed):
        return "none"
    z_min, z_max = 0.0, 0.0
    for j in sets.capped_both:
        z1 = abs(m.cap1.get(j, 0.0))
        z2 = abs(m.cap2.get(j, 0.0))
        z_min = max(z_min, min(z1, z2))
        z_max = max(z_max, max(z1, z2))
    if z_max <= tol:
        return "S"
    if z_min <= tol:
        return "M"
    return "C"


def disj_licq(
    disj: DisjunctiveNlp, x: np.ndarray, tol: float = 1e-8
) -> LicqReport:
    """Rank test of the active gradient family at a feasible point."""
    x = np.asarray(x, dtype=float)
    sets = disj_active_sets(disj, x, max(tol, DEFAULT_ACTIVITY_TOL))
    p = disj.problem
    rec = evaluate(p, x)
    cols, _ = _gradient_columns(p, rec, sets, max(tol, DEFAULT_ACTIVITY_TOL))
    if not cols:
        return LicqReport(ok=True, rank=0, n_gradients=0, smallest_sv=0.0,
                          largest_sv=0.0)
    M = np.column_stack(cols)
    sv = np.linalg.svd(M, compute_uv=False)
    largest = float(sv[0])
    smallest = float(sv[-1]) if len(sv) == len(cols) else 0.0
    ok = len(cols) <= min(M.shape) and smallest > tol * max(largest, 1.0)
    rank = int(np.sum(sv > tol * max(largest, 1.0)))
    return LicqReport(
        ok=ok,
        rank=rank,
        n_gradients=len(cols),
        smallest_sv=smallest,
        largest_sv=largest,
    )


def _greedy_pattern(p: MpccProblem, x0: np.ndarray) -> BranchPattern:
    rec = evaluate(p, x0)
    return BranchPattern(
        "".join("A" if rec.f1[j] <= rec.f2[j] else "B" for j in range(p.n_pairs))
    )


def _certify(disj: DisjunctiveNlp, x, f, status, pattern, statuses, iterations,
             tol: float):
    try:
        m = recover_disj_multipliers(disj, x, max(tol, 1e-6))
    except ClassificationRefusedError:
        return DisjSolution(
            disj=disj, x=x, f=f, status=status, pattern=pattern, sets=None,
            multipliers=None, stationarity="", licq=None,
            branch_statuses=statuses, iterations=iterations,
        )
    return DisjSolution(
        disj=disj,
        x=x,
        f=f,
        status=status,
        pattern=pattern,
        sets=m.sets,
        multipliers=m,
        stationarity=classify_disj_stationarity(m, m.sets),
        licq=disj_licq(disj, x),
        branch_statuses=statuses,
        iterations=iterations,
    )


def solve_disjunctive(
    disj: DisjunctiveNlp,
    x0: np.ndarray | None = None,
    opts: SolverOptions | None = None,
    mode: str = "enumerate",
) -> DisjSolution:
    """Solve the kinked relaxation by branch enumeration from ``x0``.

    ``enumerate`` solves every branch pattern (requires ``n_pairs`` at most
    :data:`ENUMERATION_CAP`) and keeps the best converged point; exact ties
    go to the lexicographically smallest pattern.  ``greedy`` fixes one
    pattern by the smaller factor value at ``x0``.  When no pattern
    converges the status reflects the dominant failure: ``infeasible`` if
    every branch was infeasible, ``numerical-failure`` if any diverged,
    ``max-iter`` otherwise; the returned point is the least-violating
    iterate seen.
    """
    p = disj.problem
    if x0 is None:
        x0 = p.start_array
    x0 = np.asarray(x0, dtype=float)
    if mode == "enumerate":
        if p.n_pairs > ENUMERATION_CAP:
            raise ValueError(
                f"enumeration cap exceeded: {p.n_pairs} pairs > {ENUMERATION_CAP}; "
                "use mode='greedy'"
            )
        patterns = [
            BranchPattern("".join(cs))
            for cs in itertools.product("AB", repeat=p.n_pairs)
        ]
    elif mode == "greedy":
        patterns = [_greedy_pattern(p, x0)]
    else:
        raise ValueError(f"mode must be 'enumerate' or 'greedy', got {mode!r}")

    from .regularize import _disj_violation

    statuses: dict = {}
    best: tuple | None = None  # (f, pattern, solution)
    fallback: tuple | None = None  # (violation, pattern, solution)
    total_iterations = 0
    for pattern in patterns:
        sol: NlpSolution = solve_nlp(disj.branch_nlp(str(pattern)), x0=x0,
                                     options=opts)
        statuses[str(pattern)] = sol.status
        total_iterations += sol.iterations
        if np.all(np.isfinite(sol.x)):
            vio = _disj_violation(p, disj.t, sol.x)
            if fallback is None or vio < fallback[0]:
                fallback = (vio, pattern, sol)
        if sol.status != "converged":
            continue
        if _disj_violation(p, disj.t, sol.x) > 1e-6:
            continue
        f = float(sol.f)
        if best is None or f < best[0] - 1e-9 * max(1.0, abs(best[0])):
            best = (f, pattern, sol)
    if best is not None:
        f, pattern, sol = best
        return _certify(
            disj, sol.x, f, "converged", pattern, statuses, total_iterations,
            tol=DEFAULT_ACTIVITY_TOL,
        )
    kinds = set(statuses.values())
    if kinds <= {"infeasible"}:
        status = "infeasible"
    elif "numerical-failure" in kinds:
        status = "numerical-failure"
    elif "infeasible" in kinds:
        status = "infeasible"
    else:
        status = "max-iter"
    if fallback is not None:
        _, pattern, sol = fallback
        x, f = sol.x, float(sol.f) if np.isfinite(sol.f) else float("nan")
    else:
        pattern, x, f = None, x0, float("nan")
    return DisjSolution(
        disj=disj, x=x, f=f, status=status, pattern=pattern, sets=None,
        multipliers=None, stationarity="", licq=None,
        branch_statuses=statuses, iterations=total_iterations,
    )
