"""Benchmark-layer tests: metrics, profiles, corpus integrity, suite runs.

Metric values are pinned by hand arithmetic on the three-case rule;
profile shapes by enumerating tiny matrices.  Suite tests run the real
homotopy driver on one or two corpus entries with a single timing
repetition (the 10-run averaging protocol stays the default).
"""

import math

import numpy as np
import pytest

from mpccreg.analysis import mpcc_c_index
from mpccreg.bench import (
    EPS_M,
    BenchReport,
    BenchRow,
    CorpusEntry,
    load_corpus,
    load_corpus_dir,
    corpus_dir,
    normalized_relative_error,
    parse_report_csv,
    performance_profile,
    profile_to_csv,
    relative_time,
    report_to_csv,
    run_suite,
)
from mpccreg.homotopy import HomotopyParams
from mpccreg.model import make_problem

INF = float("inf")


def entry_map():
    return {e.problem.name: e for e in load_corpus()}


class TestNormalizedRelativeError:
    def test_table_row(self):
        # one regularization lands 10.5% above the shared best value
        fbar = normalized_relative_error({"ks": 110.5, "disj": 100.0, "scholtes": 100.0})
        assert fbar["ks"] == pytest.approx(0.105, rel=1e-12)
        assert fbar["disj"] == 0.0
        assert fbar["scholtes"] == 0.0

    def test_all_infinite(self):
        out = normalized_relative_error([INF, INF])
        assert all(math.isinf(v) for v in out)

    def test_zero_minimum(self):
        out = normalized_relative_error([0.0, 1.0])
        assert out[0] == 0.0
        assert out[1] == 1.0 / EPS_M

    def test_negative_minimum(self):
        out = normalized_relative_error([-2.0, -1.0])
        assert out[0] == 0.0
        assert out[1] == pytest.approx(0.5)

    def test_zero_exactly_on_argmins(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            vals = rng.normal(size=4) + 2.0  # min finite, nonzero
            vals[rng.integers(4)] = INF if rng.random() < 0.3 else vals[0]
            out = normalized_relative_error(vals)
            m = vals.min()
            if m == 0.0 or math.isinf(m):
                continue
            for v, o in zip(vals, out):
                assert (o == 0.0) == (v == m)

    def test_infinite_entry_with_finite_min(self):
        out = normalized_relative_error([1.0, INF])
        assert out[0] == 0.0
        assert math.isinf(out[1])


class TestRelativeTime:
    def test_simple_row(self):
        out = relative_time([1.0, 2.0, 4.0])
        assert list(out) == [0.0, 1.0, 3.0]

    def test_all_infinite(self):
        out = relative_time({"a": INF, "b": INF})
        assert all(math.isinf(v) for v in out.values())

    def test_zero_minimum(self):
        out = relative_time([0.0, 5.0])
        assert out[0] == 0.0
        assert out[1] == 5.0 / EPS_M


class TestPerformanceProfile:
    def test_single_problem_step(self):
        prof = performance_profile([[0.0, 1.0]], ["a", "b"])
        assert prof["a"] == [(0.0, 1.0), (1.0, 1.0)]
        assert prof["b"] == [(0.0, 0.0), (1.0, 1.0)]

    def test_all_infinite_reg_is_identically_zero(self):
        prof = performance_profile([[0.0, INF], [2.0, INF]], ["a", "b"])
        assert all(frac == 0.0 for _, frac in prof["b"])
        assert prof["a"][-1] == (2.0, 1.0)

    def test_two_by_two(self):
        prof = performance_profile([[0.0, 1.0], [1.0, 0.0]], ["a", "b"])
        for reg in ("a", "b"):
            assert prof[reg][0] == (0.0, 0.5)
            assert prof[reg][-1] == (1.0, 1.0)

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(11)
        M = rng.exponential(size=(7, 3))
        M[rng.random(size=M.shape) < 0.2] = INF
        prof = performance_profile(M, ["a", "b", "c"])
        for samples in prof.values():
            fracs = [f for _, f in samples]
            assert all(0.0 <= f <= 1.0 for f in fracs)
            assert all(f1 <= f2 for f1, f2 in zip(fracs, fracs[1:]))
            taus = [t for t, _ in samples]
            assert taus == sorted(taus)

    def test_emitted_at_all_breakpoints(self):
        M = [[0.5, 2.5], [1.5, 0.5]]
        prof = performance_profile(M, ["a", "b"])
        taus = [t for t, _ in prof["a"]]
        assert taus == [0.0, 0.5, 1.5, 2.5]

    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError):
            performance_profile([[-1.0, 0.0]], ["a", "b"])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            performance_profile([[0.0, 1.0]], ["a"])


class TestCorpus:
    def test_thirteen_entries(self):
        names = sorted(e.problem.name for e in load_corpus())
        assert names == sorted(
            [
                "example1", "example2", "example3", "example4",
                "example5", "example6", "example7", "example8",
                "prototype", "ralph1", "scholtes4", "ex9.2.2", "kth1",
            ]
        )
        assert len(set(names)) == 13

    def test_expectation_dimensions_valid(self):
        for e in load_corpus():
            for pt in e.points:
                assert len(pt.x) == e.problem.n, e.problem.name

    def test_source_tags(self):
        for e in load_corpus():
            assert e.source.startswith(("worked-", "macmpec-")), e.problem.name

    def test_known_optima(self):
        m = entry_map()
        assert m["example5"].optimal_value == 0.0
        assert m["prototype"].optimal_value == 1.0
        assert m["ex9.2.2"].optimal_value == 100.0
        assert m["ralph1"].optimal_value == 0.0
        assert m["scholtes4"].optimal_value == 0.0
        assert m["kth1"].optimal_value == 0.0
        # programs unbounded below carry no optimal value (example3 runs
        # off along the feasible ray (s, s, 0, 0) with objective 1 - s)
        for name in ("example1", "example3", "example4", "example7", "example8"):
            assert m[name].optimal_value is None

    def test_point_expectations_certified(self):
        # every expected stationary point classifies as declared
        for e in load_corpus():
            for pt in e.points:
                report = mpcc_c_index(e.problem, np.array(pt.x, dtype=float))
                assert report.stationarity == pt.stationarity, e.problem.name
                assert report.c_index == pt.c_index, e.problem.name

    def test_duplicated_program_pair(self):
        # example8 restates example7's program under its own name
        from mpccreg.model import print_problem

        m = entry_map()
        body7 = print_problem(m["example7"].problem).splitlines()[1:]
        body8 = print_problem(m["example8"].problem).splitlines()[1:]
        assert body7 == body8

    def test_load_dir_matches_bundled(self):
        by_dir = load_corpus_dir(corpus_dir())
        assert [e.problem.name for e in by_dir] == [
            e.problem.name for e in load_corpus()
        ]

    def test_load_dir_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus_dir(tmp_path / "nope")

    def test_load_dir_empty(self, tmp_path):
        with pytest.raises(ValueError):
            load_corpus_dir(tmp_path)


class TestRunSuite:
    def test_single_entry_target_met(self):
        m = entry_map()
        report = run_suite([m["example5"]], ["disj"], time_runs=1)
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.problem == "example5"
        assert row.reg == "disj"
        assert row.status == "target-met"
        assert row.f == pytest.approx(0.0, abs=1e-8)
        assert row.maxvio <= 1e-6
        assert math.isfinite(row.time_ms_avg)
        assert row.fbar == 0.0

    def test_scholtes4_value_band(self):
        m = entry_map()
        report = run_suite([m["scholtes4"]], ["disj"], time_runs=1)
        row = report.rows[0]
        assert row.status == "target-met"
        assert -1e-6 <= row.f <= 0.0
        assert row.maxvio <= 1e-6

    def test_empty_regs_rejected(self):
        with pytest.raises(ValueError):
            run_suite([entry_map()["example5"]], [])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            run_suite([], ["disj"])

    def test_unknown_reg_rejected(self):
        with pytest.raises(ValueError):
            run_suite([entry_map()["example5"]], ["spam"])

    def test_infeasible_run_carries_infinities(self):
        # unbounded on every branch: the driver aborts and the conventions
        # assign infinite value and time to the infeasible result
        m = entry_map()
        report = run_suite([m["example7"]], ["disj"], time_runs=1)
        row = report.rows[0]
        assert row.status == "subproblem-failure"
        assert math.isinf(row.f)
        assert math.isinf(row.time_ms_avg)
        assert math.isinf(row.fbar)
        assert math.isinf(row.taubar)

    def test_row_order_and_fbar(self):
        m = entry_map()
        report = run_suite(
            [m["prototype"], m["example5"]], ["disj", "scholtes"], time_runs=1
        )
        keys = [(r.problem, r.reg) for r in report.rows]
        assert keys == [
            ("prototype", "disj"),
            ("prototype", "scholtes"),
            ("example5", "disj"),
            ("example5", "scholtes"),
        ]
        proto = [r for r in report.rows if r.problem == "prototype"]
        best = min(r.f for r in proto)
        assert best == pytest.approx(1.0, abs=1e-6)
        for r in proto:
            assert (r.fbar == 0.0) == (r.f == best)

    def test_determinism_excluding_time(self):
        m = entry_map()
        runs = [
            run_suite([m["example5"], m["prototype"]], ["disj"], time_runs=1)
            for _ in range(2)
        ]
        cols = [
            [(r.problem, r.reg, r.status, r.f, r.maxvio, r.fbar) for r in rep.rows]
            for rep in runs
        ]
        assert cols[0] == cols[1]

    def test_workers_do_not_change_results(self):
        m = entry_map()
        entries = [m["example5"], m["prototype"]]
        serial = run_suite(entries, ["disj"], time_runs=1)
        threaded = run_suite(entries, ["disj"], time_runs=1, workers=4)
        assert [(r.problem, r.reg, r.status, r.f, r.maxvio) for r in serial.rows] == [
            (r.problem, r.reg, r.status, r.f, r.maxvio) for r in threaded.rows
        ]

    def test_override_params(self):
        m = entry_map()
        loose = HomotopyParams(kind="disj", eps=1e-2)
        report = run_suite(
            [m["example5"]], ["disj"], overrides={"disj": loose}, time_runs=1
        )
        assert report.rows[0].status == "target-met"

    def test_override_kind_mismatch_rejected(self):
        with pytest.raises(ValueError):
            run_suite(
                [entry_map()["example5"]],
                ["disj"],
                overrides={"disj": HomotopyParams(kind="ks")},
            )

    def test_out_writes_csv(self, tmp_path):
        m = entry_map()
        path = tmp_path / "report.csv"
        report = run_suite([m["example5"]], ["disj"], time_runs=1, out=path)
        text = path.read_text()
        assert text == report_to_csv(report)
        assert parse_report_csv(text) == report

    def test_custom_entry_minimal_fields(self):
        p = make_problem(
            n=2,
            objective="x1 + x2",
            pairs=[("x1", "x2")],
            start=(1.0, 1.0),
            name="custom",
        )
        report = run_suite([CorpusEntry(problem=p)], ["disj"], time_runs=1)
        assert report.rows[0].status == "target-met"


class TestReportCsv:
    def _report(self):
        rows = (
            BenchRow("p1", "disj", "target-met", 0.0, 1e-9, 3.25, 0.0, 0.0),
            BenchRow("p1", "ks", "t-floor", INF, 0.5, INF, INF, INF),
            BenchRow("p2", "disj", "target-met", -1.25e-7, 0.0, 2.5, 0.0, 1.0),
            BenchRow("p2", "ks", "target-met", -1.25e-7, 1e-12, 1.25, 0.0, 0.0),
        )
        return BenchReport(rows=rows, regs=("disj", "ks"), problems=("p1", "p2"))

    def test_header(self):
        text = report_to_csv(self._report())
        assert text.splitlines()[0] == (
            "problem,reg,status,f,maxvio,time_ms_avg,fbar,taubar"
        )

    def test_round_trip(self):
        report = self._report()
        assert parse_report_csv(report_to_csv(report)) == report

    def test_metric_matrix(self):
        report = self._report()
        M = report.metric_matrix("fbar")
        assert M.shape == (2, 2)
        assert M[0, 1] == INF
        with pytest.raises(ValueError):
            report.metric_matrix("status")


class TestProfileCsv:
    def test_format(self):
        prof = {"disj": [(0.0, 1.0), (1.0, 1.0)], "ks": [(0.0, 0.5), (1.0, 1.0)]}
        text = profile_to_csv(prof)
        lines = text.splitlines()
        assert lines[0] == "reg,tau,fraction"
        assert lines[1] == "disj,0,1"
        assert len(lines) == 5

    def test_from_report_matrix(self):
        report = TestReportCsv()._report()
        prof = performance_profile(report.metric_matrix("fbar"), report.regs)
        assert set(prof) == {"disj", "ks"}
        assert prof["disj"][-1][1] == 1.0
