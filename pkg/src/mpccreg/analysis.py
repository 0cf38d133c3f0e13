"""Stationarity certificates and curvature indices at complementarity kinks.

Given a point that satisfies the complementarity system exactly, this
module recovers multipliers for the kink-aware stationarity identity by
least squares, classifies the point (``S``/``M``/``C``/``none``) from the
multiplier signs on biactive pairs, and measures curvature: the Hessian of
the Lagrangian restricted to the tangent space of the active constraints
yields a quadratic index (negative eigenvalue count), which together with
the count of doubly negative biactive couples gives the overall index used
to tell minimizers from saddles.

The same diagnostics exist for points of the kinked relaxation
(:func:`disj_c_index`).  :func:`compare_limit_and_relaxed` checks one
relaxed report against the report at its limit point — active-set
inclusions, multiplier limits, and index bounds — and
:func:`trajectory_diagnostics` runs those checks across a whole sequence
of relaxed solutions, never raising, so it can be pointed at degenerate
trajectories.  :func:`diagnostics_text` renders the result as ``key:
value`` lines for printing and round-trip parsing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .disjunctive import (
    DEFAULT_SIGN_TOL,
    DisjMultipliers,
    LicqReport,
    _active_side_indices,
    _gradient_columns,
    classify_disj_stationarity,
    disj_licq,
    recover_disj_multipliers,
)
from .model import (
    DEFAULT_ACTIVITY_TOL,
    ActiveSets,
    ClassificationRefusedError,
    MpccProblem,
    active_sets,
    evaluate,
)
from .regularize import DisjunctiveNlp, disj_active_sets, disjunctive

__all__ = [
    "EIG_REL_TOL",
    "MpccMultipliers",
    "SignedActiveSets",
    "TangentBasis",
    "IndexReport",
    "DisjIndexReport",
    "recover_mpcc_multipliers",
    "classify_mpcc_stationarity",
    "signed_subsets",
    "nullspace_basis",
    "tangent_basis",
    "disj_tangent_basis",
    "mpcc_licq",
    "mpcc_c_index",
    "disj_c_index",
    "compare_limit_and_relaxed",
    "trajectory_diagnostics",
    "diagnostics_text",
]

# an eigenvalue counts as zero when below this fraction of the spectral scale
EIG_REL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class MpccMultipliers:
    """Multipliers of the stationarity identity at a kink point.

    ``mult1[j]`` weights the gradient of the first factor of pair ``j``
    (present for pairs in ``zero1`` and ``both_zero``), ``mult2[j]`` the
    second factor (``zero2`` and ``both_zero``).  Multipliers on singly
    active pairs are sign-free; the couple on a biactive pair decides the
    stationarity class.  ``side_ineq`` / ``side_eq`` hold side-constraint
    multipliers.  ``residual`` is the least-squares defect, ``reliable`` is
    False when the active gradients were rank deficient (the values are
    then a minimum-norm choice, not a unique certificate).
    """

    sets: ActiveSets
    mult1: dict = field(default_factory=dict)
    mult2: dict = field(default_factory=dict)
    side_ineq: dict = field(default_factory=dict)
    side_eq: dict = field(default_factory=dict)
    residual: float = 0.0
    reliable: bool = True

    def replace(self, **changes) -> "MpccMultipliers":
        return dataclasses.replace(self, **changes)

    def all_values(self):
        """All multiplier values with their (group, index) keys."""
        out = []
        for group in ("mult1", "mult2", "side_ineq", "side_eq"):
            for k, v in getattr(self, group).items():
                out.append(((group, k), float(v)))
        return out


def _mpcc_gradient_columns(p: MpccProblem, rec, sets: ActiveSets, tol: float):
    """Gradient columns of the kink stationarity system, with their keys."""
    cols, keys = [], []
    for j in sorted(set(sets.zero1) | set(sets.both_zero)):
        cols.append(rec.f1_grad[j])
        keys.append(("mult1", j))
    for j in sorted(set(sets.zero2) | set(sets.both_zero)):
        cols.append(rec.f2_grad[j])
        keys.append(("mult2", j))
    for i in _active_side_indices(p, rec, tol):
        cols.append(rec.g_grad[i])
        keys.append(("side_ineq", i))
    for i in range(len(p.side_eq)):
        cols.append(rec.h_grad[i])
        keys.append(("side_eq", i))
    return cols, keys


def recover_mpcc_multipliers(
    p: MpccProblem, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> MpccMultipliers:
    """Least-squares multipliers of the stationarity identity at ``x``.

    Raises :class:`~mpccreg.model.ClassificationRefusedError` when ``x``
    does not satisfy the complementarity system within ``tol``.
    """
    x = np.asarray(x, dtype=float)
    sets = active_sets(p, x, tol)
    rec = evaluate(p, x)
    cols, keys = _mpcc_gradient_columns(p, rec, sets, tol)
    groups: dict = {k: {} for k in ("mult1", "mult2", "side_ineq", "side_eq")}
    if not cols:
        residual = float(np.linalg.norm(rec.objective_grad, np.inf))
        return MpccMultipliers(sets=sets, residual=residual, **groups)
    M = np.column_stack(cols)
    sol, _, rank, _ = np.linalg.lstsq(M, rec.objective_grad, rcond=None)
    residual = float(np.linalg.norm(M @ sol - rec.objective_grad, np.inf))
    for (group, k), value in zip(keys, sol):
        groups[group][k] = float(value)
    return MpccMultipliers(
        sets=sets,
        residual=residual,
        reliable=bool(rank == len(cols)),
        **groups,
    )


def classify_mpcc_stationarity(
    m: MpccMultipliers, tol: float = DEFAULT_SIGN_TOL
) -> str:
    """Stationarity class from multiplier signs: ``S``, ``M``, ``C`` or
    ``none``.

    Side-inequality multipliers must be nonnegative for any class.  On each
    biactive couple, strictly opposite signs refuse classification; ``C``
    accepts any sign-compatible couple, ``M`` additionally needs each
    couple strictly positive or with a vanishing member, ``S`` needs both
    members nonnegative.
    """
    if any(v < -tol for v in m.side_ineq.values()):
        return "none"
    couples = [
        (m.mult1.get(j, 0.0), m.mult2.get(j, 0.0)) for j in m.sets.both_zero
    ]
    for v1, v2 in couples:
        if (v1 < -tol and v2 > tol) or (v1 > tol and v2 < -tol):
            return "none"
    if all(v1 >= -tol and v2 >= -tol for v1, v2 in couples):
        return "S"
    if all(
        (v1 > tol and v2 > tol) or min(abs(v1), abs(v2)) <= tol
        for v1, v2 in couples
    ):
        return "M"
    return "C"


@dataclass(frozen=True)
class SignedActiveSets:
    """Active pairs bucketed by multiplier sign.

    ``single1_*`` partitions ``zero1`` by the sign of ``mult1``,
    ``single2_*`` mirrors it for ``zero2``.  Biactive couples land in
    ``biactive_neg`` (both strictly negative), ``biactive_pos`` (both
    strictly positive) or ``biactive_null`` (either member within ``tol``
    of zero); couples with strictly opposite signs belong to none of the
    three.
    """

    single1_neg: tuple
    single1_null: tuple
    single1_pos: tuple
    single2_neg: tuple
    single2_null: tuple
    single2_pos: tuple
    biactive_neg: tuple
    biactive_null: tuple
    biactive_pos: tuple
    tol: float


def _sign_bucket(values, indices, tol):
    neg, null, pos = [], [], []
    for j in indices:
        v = values.get(j, 0.0)
        (neg if v < -tol else pos if v > tol else null).append(j)
    return tuple(neg), tuple(null), tuple(pos)


def signed_subsets(
    m: MpccMultipliers, tol: float = DEFAULT_SIGN_TOL
) -> SignedActiveSets:
    """Bucket the active pairs of ``m`` by multiplier sign."""
    s1 = _sign_bucket(m.mult1, m.sets.zero1, tol)
    s2 = _sign_bucket(m.mult2, m.sets.zero2, tol)
    b_neg, b_null, b_pos = [], [], []
    for j in m.sets.both_zero:
        v1 = m.mult1.get(j, 0.0)
        v2 = m.mult2.get(j, 0.0)
        if min(abs(v1), abs(v2)) <= tol:
            b_null.append(j)
        elif v1 < -tol and v2 < -tol:
            b_neg.append(j)
        elif v1 > tol and v2 > tol:
            b_pos.append(j)
    return SignedActiveSets(
        single1_neg=s1[0],
        single1_null=s1[1],
        single1_pos=s1[2],
        single2_neg=s2[0],
        single2_null=s2[1],
        single2_pos=s2[2],
        biactive_neg=tuple(b_neg),
        biactive_null=tuple(b_null),
        biactive_pos=tuple(b_pos),
        tol=tol,
    )


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """Orthonormal basis of the tangent space of the active constraints."""

    matrix: np.ndarray  # shape (n, dim)
    dim: int


def _nullspace_basis(rows, n: int) -> np.ndarray:
    if not rows:
        return np.eye(n)
    A = np.vstack(rows)
    _, sv, vt = np.linalg.svd(A)
    cutoff = (float(sv[0]) if sv.size else 0.0) * 1e-10
    rank = int(np.sum(sv > cutoff))
    return vt[rank:].T


def nullspace_basis(rows: np.ndarray) -> TangentBasis:
    """Orthonormal nullspace basis of a stack of row vectors.

    ``rows`` is an (m, n) array whose rows are constraint gradients; the
    result spans the directions orthogonal to all of them.  An empty stack
    (m = 0) yields the identity basis of the ambient space.
    """
    A = np.atleast_2d(np.asarray(rows, dtype=float))
    basis = _nullspace_basis(list(A) if A.size else [], A.shape[1])
    return TangentBasis(matrix=basis, dim=basis.shape[1])


def _mpcc_active_rows(p: MpccProblem, rec, sets: ActiveSets, tol: float):
    rows = [rec.f1_grad[j] for j in sorted(set(sets.zero1) | set(sets.both_zero))]
    rows += [rec.f2_grad[j] for j in sorted(set(sets.zero2) | set(sets.both_zero))]
    rows += [rec.g_grad[i] for i in _active_side_indices(p, rec, tol)]
    rows += [rec.h_grad[i] for i in range(len(p.side_eq))]
    return rows


def tangent_basis(
    p: MpccProblem, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> TangentBasis:
    """Tangent space of all vanishing factors and active side constraints."""
    x = np.asarray(x, dtype=float)
    sets = active_sets(p, x, tol)
    rec = evaluate(p, x)
    basis = _nullspace_basis(_mpcc_active_rows(p, rec, sets, tol), p.n)
    return TangentBasis(matrix=basis, dim=basis.shape[1])


def disj_tangent_basis(
    disj: DisjunctiveNlp, x: np.ndarray, tol: float = DEFAULT_ACTIVITY_TOL
) -> TangentBasis:
    """Tangent space of the active cap/floor/side constraints at ``x``."""
    x = np.asarray(x, dtype=float)
    sets = disj_active_sets(disj, x, tol)
    rec = evaluate(disj.problem, x)
    cols, _ = _gradient_columns(disj.problem, rec, sets, tol)
    basis = _nullspace_basis(cols, disj.problem.n)
    return TangentBasis(matrix=basis, dim=basis.shape[1])


def mpcc_licq(
    p: MpccProblem, x: np.ndarray, tol: float = 1e-8
) -> LicqReport:
    """Rank test of the active gradient family at a kink-feasible point."""
    x = np.asarray(x, dtype=float)
    act_tol = max(tol, DEFAULT_ACTIVITY_TOL)
    sets = active_sets(p, x, act_tol)
    rec = evaluate(p, x)
    cols, _ = _mpcc_gradient_columns(p, rec, sets, act_tol)
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


def _mpcc_lagrangian_hessian(rec, m: MpccMultipliers) -> np.ndarray:
    H = rec.objective_hess.copy()
    for j, v in m.mult1.items():
        H -= v * rec.f1_hess[j]
    for j, v in m.mult2.items():
        H -= v * rec.f2_hess[j]
    for i, lam in m.side_ineq.items():
        H -= lam * rec.g_hess[i]
    for i, r in m.side_eq.items():
        H -= r * rec.h_hess[i]
    return H


def _disj_lagrangian_hessian(rec, m: DisjMultipliers) -> np.ndarray:
    # caps constrain t - F <= 0, so their curvature enters with + sign
    H = rec.objective_hess.copy()
    for j, v in m.cap1.items():
        H += v * rec.f1_hess[j]
    for j, v in m.cap2.items():
        H += v * rec.f2_hess[j]
    for j, v in m.floor1.items():
        H -= v * rec.f1_hess[j]
    for j, v in m.floor2.items():
        H -= v * rec.f2_hess[j]
    for i, lam in m.side_ineq.items():
        H -= lam * rec.g_hess[i]
    for i, r in m.side_eq.items():
        H -= r * rec.h_hess[i]
    return H


def _restricted_eigenvalues(H: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.zeros(0)
    return np.sort(np.linalg.eigvalsh(basis.T @ H @ basis))


def _eig_zero_tol(eigs: np.ndarray) -> float:
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    return EIG_REL_TOL * (1.0 + scale)


@dataclass(frozen=True, eq=False)
class IndexReport:
    """Stationarity class and curvature indices at a kink point.

    ``quadratic_index`` counts negative eigenvalues of the Lagrangian
    Hessian on the tangent space, ``biactive_index`` counts biactive
    couples with both multipliers strictly negative, and ``c_index`` is
    their sum — zero exactly for the points that behave like local
    minimizers.  The three flags record the regularity assumptions the
    index theory leans on: ``biactive_nondegenerate`` (no biactive couple
    with a vanishing member), ``hessian_nonsingular`` (no zero eigenvalue
    on the tangent space) and ``singles_nonzero`` (no vanishing multiplier
    on a singly active pair); ``n_zero_singles`` counts the violations of
    the last one.
    """

    x: np.ndarray
    multipliers: MpccMultipliers
    signed: SignedActiveSets
    stationarity: str
    licq: bool
    biactive_nondegenerate: bool
    hessian_nonsingular: bool
    singles_nonzero: bool
    quadratic_index: int
    biactive_index: int
    c_index: int
    n_zero_singles: int
    tangent_dim: int
    eigenvalues: np.ndarray

    @property
    def reliable(self) -> bool:
        """True when the certificate rests on a unique multiplier choice.

        False after a rank-deficient recovery or a failed independence
        test: the indices are still reported (minimum-norm multipliers)
        but are not a unique certificate.
        """
        return bool(self.licq and self.multipliers.reliable)


def mpcc_c_index(
    p: MpccProblem,
    x: np.ndarray,
    multipliers: MpccMultipliers | None = None,
    tol: float = DEFAULT_ACTIVITY_TOL,
    sign_tol: float = DEFAULT_SIGN_TOL,
) -> IndexReport:
    """Full stationarity-and-curvature report at a kink point."""
    x = np.asarray(x, dtype=float)
    m = multipliers if multipliers is not None else recover_mpcc_multipliers(
        p, x, tol
    )
    rec = evaluate(p, x)
    signed = signed_subsets(m, sign_tol)
    tb = tangent_basis(p, x, tol)
    eigs = _restricted_eigenvalues(_mpcc_lagrangian_hessian(rec, m), tb.matrix)
    zero_tol = _eig_zero_tol(eigs)
    qi = int(np.sum(eigs < -zero_tol))
    bi = len(signed.biactive_neg)
    n_zero_singles = len(signed.single1_null) + len(signed.single2_null)
    return IndexReport(
        x=x,
        multipliers=m,
        signed=signed,
        stationarity=classify_mpcc_stationarity(m, sign_tol),
        licq=mpcc_licq(p, x).ok,
        biactive_nondegenerate=(signed.biactive_null == ()),
        hessian_nonsingular=bool(np.all(np.abs(eigs) > zero_tol)),
        singles_nonzero=(n_zero_singles == 0),
        quadratic_index=qi,
        biactive_index=bi,
        c_index=qi + bi,
        n_zero_singles=n_zero_singles,
        tangent_dim=tb.dim,
        eigenvalues=eigs,
    )


@dataclass(frozen=True, eq=False)
class DisjIndexReport:
    """Stationarity class and curvature indices at a point of the kinked
    relaxation.

    ``biactive_index`` counts doubly capped pairs whose two cap
    multipliers are both strictly nonzero; ``strict_multipliers`` records
    whether every recovered inequality multiplier is strictly positive
    (the nondegeneracy the limit correspondence leans on).
    """

    x: np.ndarray
    multipliers: DisjMultipliers
    stationarity: str
    licq: bool
    strict_multipliers: bool
    hessian_nonsingular: bool
    quadratic_index: int
    biactive_index: int
    c_index: int
    tangent_dim: int
    eigenvalues: np.ndarray

    @property
    def reliable(self) -> bool:
        """True when the certificate rests on a unique multiplier choice."""
        return bool(self.licq and self.multipliers.reliable)


def disj_c_index(
    disj: DisjunctiveNlp,
    x: np.ndarray,
    multipliers: DisjMultipliers | None = None,
    tol: float = DEFAULT_ACTIVITY_TOL,
    sign_tol: float = DEFAULT_SIGN_TOL,
) -> DisjIndexReport:
    """Full stationarity-and-curvature report for the kinked relaxation."""
    x = np.asarray(x, dtype=float)
    m = multipliers if multipliers is not None else recover_disj_multipliers(
        disj, x, tol
    )
    rec = evaluate(disj.problem, x)
    tb = disj_tangent_basis(disj, x, tol)
    eigs = _restricted_eigenvalues(_disj_lagrangian_hessian(rec, m), tb.matrix)
    zero_tol = _eig_zero_tol(eigs)
    qi = int(np.sum(eigs < -zero_tol))
    bi = sum(
        1
        for j in m.sets.capped_both
        if abs(m.cap1.get(j, 0.0)) > sign_tol
        and abs(m.cap2.get(j, 0.0)) > sign_tol
    )
    signed = [v for (group, _), v in m.all_values() if group != "side_eq"]
    return DisjIndexReport(
        x=x,
        multipliers=m,
        stationarity=classify_disj_stationarity(m, m.sets, sign_tol),
        licq=disj_licq(disj, x).ok,
        strict_multipliers=all(v > sign_tol for v in signed),
        hessian_nonsingular=bool(np.all(np.abs(eigs) > zero_tol)),
        quadratic_index=qi,
        biactive_index=bi,
        c_index=qi + bi,
        tangent_dim=tb.dim,
        eigenvalues=eigs,
    )


def _pair_contributions(m: DisjMultipliers):
    """Per-pair stationarity contribution of the relaxation multipliers.

    A capped factor contributes ``-cap``, a vanishing factor ``+floor``;
    in the limit these converge to the corresponding kink multiplier.
    """
    c1 = {j: -v for j, v in m.cap1.items()}
    for j, v in m.floor1.items():
        c1[j] = c1.get(j, 0.0) + v
    c2 = {j: -v for j, v in m.cap2.items()}
    for j, v in m.floor2.items():
        c2[j] = c2.get(j, 0.0) + v
    return c1, c2


# checks whose joint truth makes a relaxed report consistent with its limit
CONSISTENCY_CHECKS = (
    "sets_consistent",
    "multipliers_consistent",
    "quadratic_index_bracket_ok",
    "biactive_index_equal",
)


def compare_limit_and_relaxed(
    limit_report: IndexReport,
    relaxed_report: DisjIndexReport,
    t_final: float,
) -> dict:
    """Consistency checks between a relaxed report at parameter ``t_final``
    and the report at its limit point.

    Returns a plain dict (all values bool/int/float/str) and never raises:
    along a genuine trajectory the strictly signed active pairs of the
    limit must show up in the matching relaxed sets, the relaxed
    multipliers must approach the limit multipliers at rate ``t``, the
    relaxed quadratic index can overshoot the limit one by at most the
    number of vanishing single-pair multipliers, and the biactive indices
    must agree.  Those guarantees assume regularity on both sides, so each
    result carries the assumption flags: a failed check is consistent with
    the theory whenever ``assumptions_hold`` is False
    (``violation_explained`` summarizes exactly that).
    """
    signed = limit_report.signed
    dsets = relaxed_report.multipliers.sets
    zero1, zero2 = set(dsets.zero1), set(dsets.zero2)
    inclusions = [
        (set(signed.single1_neg), set(dsets.capped1)),
        (set(signed.single1_pos), zero1 - zero2),
        (set(signed.single2_neg), set(dsets.capped2)),
        (set(signed.single2_pos), zero2 - zero1),
        (set(signed.biactive_neg), set(dsets.capped_both)),
        (set(signed.biactive_pos), zero1 & zero2),
    ]
    sets_consistent = all(small <= big for small, big in inclusions)

    c1, c2 = _pair_contributions(relaxed_report.multipliers)
    l1 = limit_report.multipliers.mult1
    l2 = limit_report.multipliers.mult2
    gap = 0.0
    for limit, relaxed in ((l1, c1), (l2, c2)):
        for j in set(limit) | set(relaxed):
            gap = max(gap, abs(limit.get(j, 0.0) - relaxed.get(j, 0.0)))
    slack = max(10.0 * float(t_final), 1e-6)

    qi = limit_report.quadratic_index
    qi_relaxed = relaxed_report.quadratic_index
    shift = limit_report.n_zero_singles
    out = {
        "t_final": float(t_final),
        "stationarity_limit": limit_report.stationarity,
        "stationarity_relaxed": relaxed_report.stationarity,
        "sets_consistent": bool(sets_consistent),
        "multiplier_gap": float(gap),
        "multipliers_consistent": bool(gap <= slack),
        "limit_quadratic_index": int(qi),
        "relaxed_quadratic_index": int(qi_relaxed),
        "index_shift": int(shift),
        "quadratic_index_bracket_ok": bool(
            max(qi_relaxed - shift, 0) <= qi <= qi_relaxed
        ),
        "biactive_index_equal": bool(
            limit_report.biactive_index == relaxed_report.biactive_index
        ),
        "limit_licq": bool(limit_report.licq),
        "relaxed_licq": bool(relaxed_report.licq),
        "limit_reliable": bool(limit_report.reliable),
        "relaxed_reliable": bool(relaxed_report.reliable),
        "limit_biactive_nondegenerate": bool(
            limit_report.biactive_nondegenerate
        ),
        "relaxed_strict_multipliers": bool(relaxed_report.strict_multipliers),
        "limit_hessian_nonsingular": bool(limit_report.hessian_nonsingular),
        "relaxed_hessian_nonsingular": bool(
            relaxed_report.hessian_nonsingular
        ),
    }
    out["checks_pass"] = all(out[k] for k in CONSISTENCY_CHECKS)
    out["assumptions_hold"] = (
        out["limit_licq"]
        and out["relaxed_licq"]
        and out["limit_reliable"]
        and out["relaxed_reliable"]
        and out["limit_biactive_nondegenerate"]
        and out["relaxed_strict_multipliers"]
        and out["limit_hessian_nonsingular"]
        and out["relaxed_hessian_nonsingular"]
    )
    out["violation_explained"] = bool(
        out["checks_pass"] or not out["assumptions_hold"]
    )
    return out


def trajectory_diagnostics(
    problem: MpccProblem,
    runs,
    x_limit: np.ndarray,
    tol: float = DEFAULT_ACTIVITY_TOL,
    sign_tol: float = DEFAULT_SIGN_TOL,
) -> dict:
    """Consistency report for a whole relaxation trajectory.

    ``runs`` is a sequence of ``(t, point)`` entries, typically sorted by
    decreasing ``t``; each point may be a plain array or any object with
    an ``x`` attribute (solver results).  The limit point ``x_limit`` is
    classified once; every run is compared against it with
    :func:`compare_limit_and_relaxed`.

    Diagnostic by design, the function never raises: an entry whose point
    is not feasible for its relaxation (or whose classification fails)
    becomes an ``error`` entry, and an unclassifiable limit point yields a
    report with a top-level ``error``.  ``all_consistent`` is True when
    every entry ran and passed all consistency checks.
    """
    entries = []
    result: dict = {"n_runs": 0, "entries": entries}
    try:
        limit_report = mpcc_c_index(
            problem, x_limit, tol=tol, sign_tol=sign_tol
        )
    except (ClassificationRefusedError, np.linalg.LinAlgError) as e:
        result["error"] = f"limit point not classifiable: {e}"
        result["all_consistent"] = False
        return result
    result["limit_stationarity"] = limit_report.stationarity
    result["limit_quadratic_index"] = limit_report.quadratic_index
    result["limit_biactive_index"] = limit_report.biactive_index
    result["limit_c_index"] = limit_report.c_index
    result["limit_reliable"] = limit_report.reliable
    for t, point in runs:
        x = getattr(point, "x", point)
        try:
            relaxed = disj_c_index(
                disjunctive(problem, float(t)),
                np.asarray(x, dtype=float),
                tol=tol,
                sign_tol=sign_tol,
            )
        except (ClassificationRefusedError, np.linalg.LinAlgError) as e:
            entries.append({"t_final": float(t), "error": str(e)})
            continue
        entries.append(compare_limit_and_relaxed(limit_report, relaxed, t))
    result["n_runs"] = len(entries)
    result["all_consistent"] = all(
        "error" not in d and d["checks_pass"] for d in entries
    )
    return result


def _diagnostic_lines(d: dict, prefix: str):
    for key, value in d.items():
        if key == "entries":
            for i, entry in enumerate(value):
                yield from _diagnostic_lines(entry, f"{prefix}run[{i}].")
        elif isinstance(value, bool):
            yield f"{prefix}{key}: {'true' if value else 'false'}"
        elif isinstance(value, float):
            yield f"{prefix}{key}: {value!r}"  # shortest exact round-trip
        else:
            yield f"{prefix}{key}: {value}"


def diagnostics_text(d: dict) -> str:
    """Serialize a diagnostics dict as ``key: value`` lines.

    Nested trajectory entries are flattened with a ``run[i].`` prefix;
    booleans print as ``true``/``false``, floats with full precision.
    """
    return "\n".join(_diagnostic_lines(d, ""))
