"""Benchmark corpus, comparison metrics, and performance profiles.

The bundled corpus holds thirteen small analytic programs: eight worked
examples exercising every stationarity class and index situation the
analysis layer distinguishes, the two-variable prototype, and four
standard complementarity test instances transcribed into the problem
grammar with their known optimal values.

A suite run (:func:`run_suite`) drives the homotopy once per (problem,
regularization) cell, applies the infeasible-result convention (infinite
value and time), and derives two normalized columns: the relative error
``fbar`` and the relative time ``taubar``, both via the same three-case
rule around the per-problem best (:func:`normalized_relative_error`,
:func:`relative_time`).  :func:`performance_profile` turns either column
into cumulative-fraction step functions for plotting.
"""

from __future__ import annotations

import importlib.resources
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .homotopy import HomotopyParams, run_homotopy
from .model import MpccProblem, parse_problem

__all__ = [
    "EPS_M",
    "PointExpectation",
    "CorpusEntry",
    "BenchRow",
    "BenchReport",
    "corpus_dir",
    "load_corpus",
    "load_corpus_dir",
    "normalized_relative_error",
    "relative_time",
    "performance_profile",
    "run_suite",
    "report_to_csv",
    "parse_report_csv",
    "profile_to_csv",
]

EPS_M = 2.0**-52

REPORT_COLUMNS = ("problem", "reg", "status", "f", "maxvio",
                  "time_ms_avg", "fbar", "taubar")


@dataclass(frozen=True)
class PointExpectation:
    """A known stationary point with its expected certificate."""

    x: tuple
    stationarity: str | None = None
    c_index: int | None = None


@dataclass(frozen=True, eq=False)
class CorpusEntry:
    """One benchmark instance with optional analytic expectations.

    ``optimal_value`` is the known global optimum (None for programs
    unbounded below), ``points`` lists stationary points whose class and
    index the analysis layer should certify, ``source`` tags where the
    instance comes from (``worked-example-N`` for the analytic examples,
    ``macmpec-style`` for transcriptions of standard test instances).
    """

    problem: MpccProblem
    optimal_value: float | None = None
    points: tuple = ()
    source: str = "user"


# analytic expectations for the bundled instances, keyed by problem name;
# degenerate corners where the active gradients are dependent (ralph1,
# scholtes4, ex9.2.2) carry only their optimal value — a unique
# multiplier certificate does not exist there
_KNOWN = {
    "example1": (None, [((0.0, 0.0, 0.0, 1.0), "M", 0)], "worked-example-1"),
    "example2": (None, [((0.0, 0.0, 1.0), "S", 0)], "worked-example-2"),
    # unbounded below along the feasible ray (s, s, 0, 0); the listed
    # point is a genuine stationary point, not a global optimum
    "example3": (None, [((0.0, 0.0, 0.0, 1.0), "S", 0)], "worked-example-3"),
    "example4": (None, [((0.0, 0.0, 0.0, 1.0), "S", 0)], "worked-example-4"),
    "example5": (0.0, [((0.0, 0.0), "S", 0)], "worked-example-5"),
    "example6": (0.0, [((0.0, 0.0), "S", 0)], "worked-example-6"),
    "example7": (None, [((0.0, 0.0), "C", 1)], "worked-example-7"),
    "example8": (None, [((0.0, 0.0), "C", 1)], "worked-example-8"),
    "prototype": (1.0, [((0.0, 2.0), "S", 0)], "worked-prototype"),
    "ralph1": (0.0, [], "macmpec-style"),
    "scholtes4": (0.0, [], "macmpec-style"),
    "ex9.2.2": (100.0, [], "macmpec-style"),
    "kth1": (0.0, [((0.0, 0.0), "S", 0)], "macmpec-style"),
}


def _make_entry(problem: MpccProblem) -> CorpusEntry:
    optimal, points, source = _KNOWN.get(problem.name, (None, [], "user"))
    expectations = tuple(
        PointExpectation(x=x, stationarity=s, c_index=ci)
        for x, s, ci in points
    )
    for pt in expectations:
        if len(pt.x) != problem.n:
            raise ValueError(
                f"expectation for {problem.name!r} has dimension "
                f"{len(pt.x)}, problem has {problem.n}"
            )
    return CorpusEntry(
        problem=problem,
        optimal_value=optimal,
        points=expectations,
        source=source,
    )


def corpus_dir() -> Path:
    """Directory holding the bundled ``*.mpcc`` instances."""
    return Path(importlib.resources.files(__package__) / "corpus")


def load_corpus_dir(path) -> tuple[CorpusEntry, ...]:
    """Parse every ``*.mpcc`` file under ``path``, in file-name order.

    Instances whose name matches a bundled one inherit its analytic
    expectations; anything else gets a bare entry.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {path}")
    files = sorted(path.glob("*.mpcc"))
    if not files:
        raise ValueError(f"no .mpcc files under {path}")
    return tuple(_make_entry(parse_problem(f.read_text())) for f in files)


def load_corpus() -> tuple[CorpusEntry, ...]:
    """The thirteen bundled benchmark instances."""
    return load_corpus_dir(corpus_dir())


def _three_case(values: np.ndarray) -> np.ndarray:
    """Shared normalization: distance from the per-problem best.

    best = 0 -> value/machine-eps; best infinite -> infinite; otherwise
    (value - best)/|best|.
    """
    v = np.asarray(values, dtype=float)
    m = float(np.min(v))
    if np.isinf(m):
        return np.full_like(v, np.inf)
    if m == 0.0:
        return v / EPS_M
    return (v - m) / abs(m)


def _normalize(values, fn):
    if isinstance(values, dict):
        keys = list(values)
        out = fn(np.array([values[k] for k in keys], dtype=float))
        return {k: float(v) for k, v in zip(keys, out)}
    return fn(np.asarray(values, dtype=float))


def normalized_relative_error(values):
    """Per-regularization relative error of final objective values.

    ``values`` maps regularizations to final objective values (dict or
    sequence); the result has the same shape.  Zero exactly for the
    entries attaining the best finite value, infinite for runs that
    produced no feasible point.
    """
    return _normalize(values, _three_case)


def relative_time(times):
    """Per-regularization relative time; same three-case rule over
    averaged wall times."""
    return _normalize(times, _three_case)


def performance_profile(matrix, regs):
    """Cumulative step functions: fraction of problems solved within a
    factor ``tau`` of the best, per regularization.

    ``matrix`` is (problems x regularizations), nonnegative or infinite
    (normalized metrics).  Samples are emitted at every finite value
    appearing in the matrix (plus 0), so the returned polylines contain
    every breakpoint of the true step functions.
    """
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.shape[1] != len(regs):
        raise ValueError(
            f"matrix has {M.shape[1]} columns for {len(regs)} regularizations"
        )
    if np.any(M < 0) or np.any(np.isnan(M)):
        raise ValueError("profile metrics must be nonnegative or infinite")
    finite = M[np.isfinite(M)]
    taus = sorted(set(finite.tolist()) | {0.0})
    n_problems = M.shape[0]
    return {
        reg: [
            (float(tau), float(np.count_nonzero(M[:, i] <= tau) / n_problems))
            for tau in taus
        ]
        for i, reg in enumerate(regs)
    }


@dataclass(frozen=True)
class BenchRow:
    """One (problem, regularization) cell of a suite report.

    ``f`` and ``time_ms_avg`` are infinite when the run ended infeasible;
    ``maxvio`` always holds the actual final violation.
    """

    problem: str
    reg: str
    status: str
    f: float
    maxvio: float
    time_ms_avg: float
    fbar: float
    taubar: float


@dataclass(frozen=True)
class BenchReport:
    """Suite results, rows ordered problem-major then by ``regs`` order."""

    rows: tuple
    regs: tuple
    problems: tuple

    def row(self, problem: str, reg: str) -> BenchRow:
        for r in self.rows:
            if r.problem == problem and r.reg == reg:
                return r
        raise KeyError((problem, reg))

    def metric_matrix(self, metric: str) -> np.ndarray:
        """(problems x regs) matrix of a normalized column, for profiles."""
        if metric not in ("fbar", "taubar"):
            raise ValueError("metric must be 'fbar' or 'taubar'")
        index = {(r.problem, r.reg): getattr(r, metric) for r in self.rows}
        return np.array(
            [[index[(p, reg)] for reg in self.regs] for p in self.problems]
        )


def _run_cell(problem: MpccProblem, params: HomotopyParams, time_runs: int):
    """One timed (problem, regularization) run; returns (trace, avg_ms)."""
    trace = None
    total = 0.0
    for _ in range(max(1, time_runs)):
        tic = time.perf_counter()
        result = run_homotopy(problem, params)
        total += (time.perf_counter() - tic) * 1000.0
        trace = trace if trace is not None else result
    return trace, total / max(1, time_runs)


def run_suite(
    corpus,
    regs,
    *,
    overrides: dict | None = None,
    time_runs: int = 10,
    workers: int = 1,
    out=None,
) -> BenchReport:
    """Run the homotopy on every (corpus entry, regularization) cell.

    ``overrides`` maps a regularization name to the
    :class:`~mpccreg.homotopy.HomotopyParams` to use for it (defaults are
    built per name otherwise).  Each cell is run ``time_runs`` times and
    the wall time averaged; results come from the first run (they are
    deterministic).  Failures never abort the suite: a run whose final
    violation exceeds its target carries infinite ``f`` and time, which
    the normalized columns and profiles propagate.  ``workers`` > 1 runs
    cells in a thread pool; the report is assembled in deterministic
    (problem, reg) order either way.  ``out``, when given, receives the
    report as CSV.
    """
    corpus = list(corpus)
    regs = list(regs)
    if not corpus:
        raise ValueError("corpus is empty")
    if not regs:
        raise ValueError("no regularizations requested")
    params_by_reg = {}
    for reg in regs:
        p = (overrides or {}).get(reg) or HomotopyParams(kind=reg)
        if p.kind != reg:
            raise ValueError(
                f"override for {reg!r} is built for kind {p.kind!r}"
            )
        params_by_reg[reg] = p

    cells = [
        (pi, ri, entry.problem, params_by_reg[reg])
        for pi, entry in enumerate(corpus)
        for ri, reg in enumerate(regs)
    ]
    results: dict = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                (pi, ri): pool.submit(_run_cell, problem, params, time_runs)
                for pi, ri, problem, params in cells
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for pi, ri, problem, params in cells:
            results[(pi, ri)] = _run_cell(problem, params, time_runs)

    rows = []
    for pi, entry in enumerate(corpus):
        f_row, t_row, cells_row = [], [], []
        for ri, reg in enumerate(regs):
            trace, avg_ms = results[(pi, ri)]
            feasible = trace.maxvio_final <= params_by_reg[reg].eps
            f_val = float(trace.f_final) if feasible else np.inf
            t_val = float(avg_ms) if feasible else np.inf
            f_row.append(f_val)
            t_row.append(t_val)
            cells_row.append((reg, trace.reason, float(trace.maxvio_final)))
        fbar = _three_case(np.array(f_row))
        taubar = _three_case(np.array(t_row))
        for ri, (reg, status, vio) in enumerate(cells_row):
            rows.append(
                BenchRow(
                    problem=entry.problem.name,
                    reg=reg,
                    status=status,
                    f=f_row[ri],
                    maxvio=vio,
                    time_ms_avg=t_row[ri],
                    fbar=float(fbar[ri]),
                    taubar=float(taubar[ri]),
                )
            )
    report = BenchReport(
        rows=tuple(rows),
        regs=tuple(regs),
        problems=tuple(e.problem.name for e in corpus),
    )
    if out is not None:
        Path(out).write_text(report_to_csv(report))
    return report


def _fmt(v: float) -> str:
    return "inf" if np.isinf(v) else f"{v:.17g}"


def report_to_csv(report: BenchReport) -> str:
    """Render a report as CSV; floats keep full precision and round-trip."""
    lines = [",".join(REPORT_COLUMNS)]
    for r in report.rows:
        lines.append(
            f"{r.problem},{r.reg},{r.status},{_fmt(r.f)},{_fmt(r.maxvio)},"
            f"{_fmt(r.time_ms_avg)},{_fmt(r.fbar)},{_fmt(r.taubar)}"
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> BenchReport:
    """Inverse of :func:`report_to_csv`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(REPORT_COLUMNS):
        raise ValueError("not a suite report: bad header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(REPORT_COLUMNS):
            raise ValueError(f"bad report row: {ln!r}")
        problem, reg, status = parts[:3]
        f, vio, ms, fbar, taubar = (float(tok) for tok in parts[3:])
        rows.append(BenchRow(problem, reg, status, f, vio, ms, fbar, taubar))
    regs, problems = [], []
    for r in rows:
        if r.reg not in regs:
            regs.append(r.reg)
        if r.problem not in problems:
            problems.append(r.problem)
    return BenchReport(
        rows=tuple(rows), regs=tuple(regs), problems=tuple(problems)
    )


def profile_to_csv(profiles: dict) -> str:
    """Render :func:`performance_profile` output as CSV rows
    ``reg,tau,fraction``."""
    lines = ["reg,tau,fraction"]
    for reg, samples in profiles.items():
        for tau, fraction in samples:
            lines.append(f"{reg},{tau:.17g},{fraction:.17g}")
    return "\n".join(lines) + "\n"
