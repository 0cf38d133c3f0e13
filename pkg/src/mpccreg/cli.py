"""Command-line front end: solve, analyze, bench, and profile.

Exit codes are the machine contract: 0 on success (for ``solve``, the
violation target was met), 1 on usage or input errors, 2 when the work
completed but the result is infeasible or the point was refused
classification.  Everything printed is ``key: value`` or ``key=value``
text meant for humans and loose parsing.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import disj_c_index, mpcc_c_index
from .bench import (
    load_corpus,
    load_corpus_dir,
    parse_report_csv,
    performance_profile,
    profile_to_csv,
    run_suite,
)
from .homotopy import KINDS, HomotopyParams, run_homotopy, write_trace_csv
from .model import ClassificationRefusedError, parse_problem
from .regularize import disjunctive

__all__ = ["main"]

PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Render performance profiles from a profile.csv (written by `mpccreg
bench` or `mpccreg profile`).  Needs matplotlib; run:

    python3 plot_profiles.py [profile.csv [out.png]]
"""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "profile.csv"
out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"

curves = {}
with open(path, newline="") as fh:
    for row in csv.DictReader(fh):
        curves.setdefault(row["reg"], []).append(
            (float(row["tau"]), float(row["fraction"]))
        )

fig, ax = plt.subplots(figsize=(6, 4))
for reg, pts in curves.items():
    pts.sort()
    ax.step([t for t, _ in pts], [f for _, f in pts], where="post", label=reg)
ax.set_xlabel("tau")
ax.set_ylabel("fraction of problems within tau of best")
ax.set_ylim(0.0, 1.05)
ax.legend()
ax.grid(True, alpha=0.3)
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {out}")
'''


def _bool(v: bool) -> str:
    return "true" if v else "false"


def _add_homotopy_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--reg",
        choices=KINDS,
        default="disj",
        help="regularization family (default: disj)",
    )
    sub.add_argument("--t0", type=float, default=1.0,
                     help="initial relaxation parameter")
    sub.add_argument("--tmin", type=float, default=1e-15,
                     help="smallest admissible parameter")
    sub.add_argument("--eps", type=float, default=1e-6,
                     help="target maximum violation")
    sub.add_argument(
        "--shrink",
        type=float,
        default=None,
        help="parameter shrink factor (default 0.0001 for scholtes, "
        "0.01 otherwise)",
    )
    sub.add_argument("--beta", type=float, default=2.0,
                     help="wedge opening of the quadrant penalty")
    sub.add_argument(
        "--mode",
        choices=("enumerate", "greedy"),
        default="enumerate",
        help="branch handling for the kinked relaxation",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpccreg",
        description="Solve and analyze programs with complementarity "
        "constraints via shrinking regularizations.",
    )
    parser.add_argument(
        "--version", action="version", version=f"mpccreg {__version__}"
    )
    sub = parser.add_subparsers(dest="command")

    solve = sub.add_parser(
        "solve", help="run the shrinking-relaxation driver on a problem file"
    )
    solve.add_argument("problem", help="path to a .mpcc problem file")
    _add_homotopy_flags(solve)
    solve.add_argument("--out", default=None,
                       help="write the iteration trace as CSV")

    analyze = sub.add_parser(
        "analyze",
        help="classify a point and report its curvature indices",
    )
    analyze.add_argument("problem", help="path to a .mpcc problem file")
    analyze.add_argument(
        "--point", nargs="+", type=float, required=True,
        help="coordinates of the point to classify",
    )
    analyze.add_argument(
        "--t", type=float, default=None,
        help="analyze the point for the kinked relaxation at this "
        "parameter instead of the limit program",
    )

    bench = sub.add_parser(
        "bench", help="run the benchmark suite and emit report artifacts"
    )
    bench.add_argument(
        "corpus", nargs="?", default=None,
        help="directory of .mpcc files (default: the bundled corpus)",
    )
    bench.add_argument(
        "--regs", default="scholtes,ks,disj,qpf",
        help="comma-separated regularization families to compare",
    )
    bench.add_argument("--time-runs", type=int, default=10,
                       help="timing repetitions per cell")
    bench.add_argument("--workers", type=int, default=1,
                       help="thread budget for suite cells")
    bench.add_argument(
        "--metric", choices=("fbar", "taubar"), default="fbar",
        help="normalized column used for profile.csv",
    )
    bench.add_argument("--outdir", default=".",
                       help="directory receiving the artifacts")

    profile = sub.add_parser(
        "profile", help="recompute performance profiles from a report.csv"
    )
    profile.add_argument("report", help="path to a suite report.csv")
    profile.add_argument(
        "--metric", choices=("fbar", "taubar"), default="fbar"
    )
    profile.add_argument("--out", default="profile.csv")
    return parser


def _params_from(args: argparse.Namespace) -> HomotopyParams:
    return HomotopyParams(
        kind=args.reg,
        t0=args.t0,
        t_min=args.tmin,
        eps=args.eps,
        shrink=args.shrink,
        beta=args.beta,
        disj_mode=args.mode,
    )


def cmd_solve(args: argparse.Namespace) -> int:
    problem = parse_problem(Path(args.problem).read_text())
    trace = run_homotopy(problem, _params_from(args))
    last = trace.rows[-1]
    print(f"problem: {problem.name}")
    print(f"reg: {args.reg}")
    print(f"status: {trace.reason}")
    print(f"rounds: {len(trace.rows)}")
    print(f"t_final: {last.t!r}")
    print(f"x: {' '.join(repr(float(v)) for v in trace.x_final)}")
    print(f"f: {trace.f_final!r}")
    print(f"maxvio: {trace.maxvio_final!r}")
    if args.out is not None:
        write_trace_csv(trace, args.out)
        print(f"trace: {args.out}")
    return 0 if trace.reason == "target-met" else 2


def cmd_analyze(args: argparse.Namespace) -> int:
    problem = parse_problem(Path(args.problem).read_text())
    x = np.array(args.point, dtype=float)
    print(f"problem: {problem.name}")
    print(f"point: {' '.join(repr(float(v)) for v in x)}")
    if args.t is None:
        r = mpcc_c_index(problem, x)
        print(
            f"class={r.stationarity} QI={r.quadratic_index} "
            f"BI={r.biactive_index} CI={r.c_index}"
        )
        print(
            f"LICQ={_bool(r.licq)} ND1={_bool(r.licq)} "
            f"ND2={_bool(r.biactive_nondegenerate)} "
            f"ND3={_bool(r.hessian_nonsingular)} "
            f"ND4={_bool(r.singles_nonzero)}"
        )
    else:
        r = disj_c_index(disjunctive(problem, args.t), x)
        print(f"t: {args.t!r}")
        print(
            f"class={r.stationarity} QI={r.quadratic_index} "
            f"BI={r.biactive_index} CI={r.c_index}"
        )
        print(
            f"LICQ={_bool(r.licq)} ND1={_bool(r.licq)} "
            f"ND2={_bool(r.strict_multipliers)} "
            f"ND3={_bool(r.hessian_nonsingular)}"
        )
    print(
        f"reliable={_bool(r.reliable)} "
        f"residual={r.multipliers.residual!r} "
        f"tangent_dim={r.tangent_dim}"
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    regs = [tok.strip() for tok in args.regs.split(",") if tok.strip()]
    unknown = [r for r in regs if r not in KINDS]
    if unknown or not regs:
        raise ValueError(
            f"unknown regularization(s): {', '.join(unknown) or '(none)'}; "
            f"valid kinds: {', '.join(KINDS)}"
        )
    entries = (
        load_corpus() if args.corpus is None else load_corpus_dir(args.corpus)
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = run_suite(
        entries,
        regs,
        time_runs=args.time_runs,
        workers=args.workers,
        out=outdir / "report.csv",
    )
    profiles = performance_profile(
        report.metric_matrix(args.metric), report.regs
    )
    (outdir / "profile.csv").write_text(profile_to_csv(profiles))
    (outdir / "plot_profiles.py").write_text(PLOT_SCRIPT)
    print(
        f"wrote {outdir / 'report.csv'} "
        f"({len(report.problems)} problems x {len(regs)} regularizations)"
    )
    print(f"wrote {outdir / 'profile.csv'} (metric: {args.metric})")
    print(f"wrote {outdir / 'plot_profiles.py'}")
    return 0


def cmd_profile(args: argparse.Namespace) -> int:
    report = parse_report_csv(Path(args.report).read_text())
    profiles = performance_profile(
        report.metric_matrix(args.metric), report.regs
    )
    Path(args.out).write_text(profile_to_csv(profiles))
    print(f"wrote {args.out} (metric: {args.metric})")
    return 0


_HANDLERS = {
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "profile": cmd_profile,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help/--version, 2 for usage errors;
        # remap usage errors to this tool's error code 1
        return 0 if not e.code else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except ClassificationRefusedError as e:
        print(f"classification refused: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
