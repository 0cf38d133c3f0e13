"""Driver that solves a sequence of relaxed programs with shrinking ``t``.

Starting from ``t0``, each round solves the chosen relaxation at the
current parameter (warm-started at the previous iterate), then shrinks
``t`` to the largest power ``shrink**l * t`` that the new iterate is *not*
feasible for — solving again on a relaxation the iterate already satisfies
could not move it.  The run stops as soon as the iterate satisfies the
complementarity system within ``eps`` (``target-met``), when no admissible
smaller parameter would cut the iterate off (``t-floor``), or after two
consecutive subproblem failures (``subproblem-failure``).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .disjunctive import solve_disjunctive
from .model import DEFAULT_ACTIVITY_TOL, MpccProblem, evaluate, maxvio
from .nlp import SolverOptions, solve_nlp
from .regularize import (
    DEFAULT_BETA,
    disjunctive,
    kanzow_schwartz,
    membership_disjunctive,
    membership_ks,
    membership_qpf,
    membership_scholtes,
    quadrant_penalty,
    scholtes,
)

__all__ = [
    "KINDS",
    "HomotopyParams",
    "TraceRow",
    "RunTrace",
    "maxvio",
    "update_t",
    "run_homotopy",
    "trace_to_csv",
    "write_trace_csv",
]

KINDS = ("scholtes", "ks", "disj", "qpf")

# slow-converging product-cap relaxations get a more aggressive default
_DEFAULT_SHRINK = {"scholtes": 1e-4, "ks": 1e-2, "disj": 1e-2, "qpf": 1e-2}


@dataclass(frozen=True)
class HomotopyParams:
    """Schedule and subproblem settings for :func:`run_homotopy`.

    ``shrink`` left as None picks the per-kind default (1e-4 for the
    product cap, 1e-2 otherwise).  ``eps`` is the target on the
    complementarity violation of the iterate; ``numpy.inf`` requests a
    single subproblem solve.
    """

    kind: str
    t0: float = 1.0
    t_min: float = 1e-15
    eps: float = 1e-6
    shrink: float | None = None
    beta: float = DEFAULT_BETA
    solver: SolverOptions = field(default_factory=SolverOptions)
    disj_mode: str = "enumerate"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.t_min <= self.t0:
            raise ValueError(
                f"need 0 < t_min <= t0, got t_min={self.t_min}, t0={self.t0}"
            )
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.shrink is not None and not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.disj_mode not in ("enumerate", "greedy"):
            raise ValueError(
                f"disj_mode must be 'enumerate' or 'greedy', got {self.disj_mode!r}"
            )

    @property
    def shrink_value(self) -> float:
        return self.shrink if self.shrink is not None else _DEFAULT_SHRINK[self.kind]


@dataclass(frozen=True, eq=False)
class TraceRow:
    """One homotopy round: parameter solved at, resulting iterate, its
    complementarity violation, the subproblem status and wall time."""

    k: int
    t: float
    x: np.ndarray
    maxvio: float
    status: str
    millis: float


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Full record of one homotopy run."""

    problem: MpccProblem
    params: HomotopyParams
    rows: tuple
    x_final: np.ndarray
    f_final: float
    maxvio_final: float
    reason: str  # target-met | t-floor | subproblem-failure


def _feasible_for(
    p: MpccProblem, kind: str, t: float, x: np.ndarray, beta: float, tol: float
) -> bool:
    if kind == "scholtes":
        return bool(membership_scholtes(p, t, x, tol=tol))
    if kind == "ks":
        return bool(membership_ks(p, t, x, tol=tol))
    if kind == "disj":
        return bool(membership_disjunctive(p, t, x, tol=tol))
    if kind == "qpf":
        return bool(membership_qpf(p, t, x, tol=tol, beta=beta))
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def update_t(
    p: MpccProblem,
    t_k: float,
    x_next: np.ndarray,
    kind: str,
    shrink: float,
    t_min: float,
    beta: float = DEFAULT_BETA,
    tol: float = DEFAULT_ACTIVITY_TOL,
) -> float | None:
    """Largest ``shrink**l * t_k`` (integer ``l >= 1``) at least ``t_min``
    for which ``x_next`` is infeasible, or None when no admissible
    candidate cuts the point off.

    The relaxed feasible sets shrink with ``t``, so scanning ``l`` upward
    and returning at the first infeasible candidate realizes the maximum.
    A None means further shrinking cannot move the iterate: either it
    already satisfies the complementarity system, or the parameter floor
    is reached.
    """
    if not 0.0 < shrink < 1.0:
        raise ValueError(f"shrink must lie in (0, 1), got {shrink}")
    x_next = np.asarray(x_next, dtype=float)
    level = 1
    candidate = t_k * shrink
    while candidate >= t_min:
        if not _feasible_for(p, kind, candidate, x_next, beta, tol):
            return candidate
        level += 1
        candidate = t_k * shrink**level
    return None


def _solve_subproblem(p: MpccProblem, t: float, params: HomotopyParams, x0):
    if params.kind == "disj":
        sol = solve_disjunctive(
            disjunctive(p, t), x0, params.solver, mode=params.disj_mode
        )
        return sol.x, sol.status
    if params.kind == "scholtes":
        nlp = scholtes(p, t)
    elif params.kind == "ks":
        nlp = kanzow_schwartz(p, t)
    else:
        nlp = quadrant_penalty(p, t, params.beta)
    sol = solve_nlp(nlp, x0, params.solver)
    return sol.x, sol.status


def run_homotopy(p: MpccProblem, params: HomotopyParams) -> RunTrace:
    """Run the shrinking-parameter loop from the problem's start vector.

    Every round appends a :class:`TraceRow`; on ``subproblem-failure`` the
    reported final point is the trace iterate with the least
    complementarity violation, otherwise the last iterate.
    """
    shrink = params.shrink_value
    x = p.start_array.copy()
    t = params.t0
    rows: list[TraceRow] = []
    failures = 0
    while True:
        begin = time.perf_counter()
        x_next, status = _solve_subproblem(p, t, params, x)
        millis = (time.perf_counter() - begin) * 1e3
        x = np.asarray(x_next, dtype=float)
        vio = maxvio(p, x)
        rows.append(
            TraceRow(k=len(rows), t=t, x=x, maxvio=vio, status=status, millis=millis)
        )
        if status in ("numerical-failure", "infeasible"):
            failures += 1
            if failures >= 2:
                reason = "subproblem-failure"
                break
        else:
            failures = 0
        if vio <= params.eps:
            reason = "target-met"
            break
        t_next = update_t(
            p, t, x, params.kind, shrink, params.t_min, beta=params.beta
        )
        if t_next is None:
            reason = "t-floor"
            break
        t = t_next
    if reason == "subproblem-failure":
        best = min(rows, key=lambda r: (r.maxvio, -r.k))
        x_final, vio_final = best.x, best.maxvio
    else:
        x_final, vio_final = x, rows[-1].maxvio
    return RunTrace(
        problem=p,
        params=params,
        rows=tuple(rows),
        x_final=x_final,
        f_final=float(evaluate(p, x_final).objective),
        maxvio_final=vio_final,
        reason=reason,
    )


def trace_to_csv(trace: RunTrace) -> str:
    """Serialize a trace, one row per round, floats at 17 significant
    digits (decimal round-trips reproduce the binary values exactly)."""
    n = len(trace.x_final)
    header = ["k", "t"] + [f"x{i + 1}" for i in range(n)] + [
        "maxvio", "status", "millis",
    ]
    lines = [",".join(header)]
    for r in trace.rows:
        fields = [str(r.k), f"{r.t:.17g}"]
        fields += [f"{xi:.17g}" for xi in r.x]
        fields += [f"{r.maxvio:.17g}", r.status, f"{r.millis:.17g}"]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: RunTrace, path) -> None:
    Path(path).write_text(trace_to_csv(trace))
