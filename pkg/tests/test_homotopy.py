"""Tests for the shrinking-parameter driver.

Oracles: feasibility probes are cross-checked against the membership
predicates, final violations are recomputed independently through
``maxvio``, and the parameter sequence is checked to be exact integer
powers of the shrink factor.
"""

import math

import numpy as np
import pytest

import mpccreg.homotopy as homotopy_module
from mpccreg.homotopy import (
    HomotopyParams,
    RunTrace,
    maxvio,
    run_homotopy,
    trace_to_csv,
    update_t,
    write_trace_csv,
)
from mpccreg.model import make_problem

PLUS = make_problem(
    n=2, objective="x1 + x2", pairs=[("x1", "x2")], start=[1.0, 1.0], name="plus"
)

MINUS = make_problem(
    n=2, objective="-x1 - x2", pairs=[("x1", "x2")], start=[1.0, 1.0], name="minus"
)

EQUALIZE = make_problem(
    n=2,
    objective="(x1 - x2)^2 + (x1 + x2 - 2)^2",
    pairs=[("x1", "x2")],
    start=[0.5, 0.5],
    name="equalize",
)

RALPH1 = make_problem(
    n=2,
    objective="2*x1 - x2",
    pairs=[("x2", "x2 - x1")],
    ineq=["x1"],
    start=[0.0, 0.0],
    name="ralph1",
)

SIDE_VIOLATED = make_problem(
    n=2,
    objective="x1",
    pairs=[("x1", "x2")],
    ineq=["x2 - 0.3"],
    start=[0.0, 1.0],
)


class TestMaxvio:
    def test_feasible_point_is_zero(self):
        assert maxvio(PLUS, np.array([0.0, 3.0])) == 0.0

    def test_complementarity_violation(self):
        assert maxvio(PLUS, np.array([0.5, 0.5])) == pytest.approx(0.5)

    def test_worst_component_wins(self):
        # side constraint violated by 0.2, complementarity by 0.1
        assert maxvio(SIDE_VIOLATED, np.array([0.1, 0.1])) == pytest.approx(0.2)


class TestHomotopyParams:
    def test_defaults(self):
        p = HomotopyParams(kind="ks")
        assert p.t0 == 1.0
        assert p.t_min == 1e-15
        assert p.eps == 1e-6
        assert p.shrink_value == 0.01

    def test_default_shrink_by_kind(self):
        assert HomotopyParams(kind="scholtes").shrink_value == 1e-4
        assert HomotopyParams(kind="disj").shrink_value == 0.01
        assert HomotopyParams(kind="qpf").shrink_value == 0.01

    def test_explicit_shrink_wins(self):
        assert HomotopyParams(kind="scholtes", shrink=0.5).shrink_value == 0.5

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            HomotopyParams(kind="bogus")
        with pytest.raises(ValueError):
            HomotopyParams(kind="ks", shrink=1.0)
        with pytest.raises(ValueError):
            HomotopyParams(kind="ks", shrink=0.0)
        with pytest.raises(ValueError):
            HomotopyParams(kind="ks", t_min=2.0, t0=1.0)
        with pytest.raises(ValueError):
            HomotopyParams(kind="ks", eps=0.0)
        with pytest.raises(ValueError):
            HomotopyParams(kind="ks", t0=0.0)
        with pytest.raises(ValueError):
            HomotopyParams(kind="disj", disj_mode="fancy")


class TestUpdateT:
    def test_immediately_infeasible_takes_one_step(self):
        t = update_t(PLUS, 1.0, np.array([0.9, 0.9]), "scholtes", 0.5, 1e-15)
        assert t == pytest.approx(0.5)

    def test_skips_parameters_that_stay_feasible(self):
        # product 0.25 is feasible at 0.5 and (within tolerance) at 0.25
        t = update_t(PLUS, 1.0, np.array([0.5, 0.5]), "scholtes", 0.5, 1e-15)
        assert t == pytest.approx(0.125)

    def test_kinked_probe(self):
        t = update_t(PLUS, 1.0, np.array([0.5, 0.6]), "disj", 0.5, 1e-15)
        assert t == pytest.approx(0.25)

    def test_feasible_limit_point_exhausts(self):
        x = np.array([0.0, 0.7])
        for kind in ("scholtes", "ks", "disj", "qpf"):
            assert update_t(PLUS, 1.0, x, kind, 0.01, 1e-15) is None

    def test_floor_cuts_off_candidates(self):
        # the only admissible candidate 0.1 keeps the point feasible
        t = update_t(PLUS, 1.0, np.array([0.1, 0.1]), "scholtes", 0.1, 0.05)
        assert t is None

    def test_result_is_integer_power_of_shrink(self):
        shrink = 0.3
        t = update_t(PLUS, 1.0, np.array([0.2, 0.2]), "scholtes", shrink, 1e-15)
        level = math.log(t) / math.log(shrink)
        assert abs(level - round(level)) < 1e-9
        assert round(level) >= 1


class TestRunHomotopy:
    def test_kinked_run_stops_at_first_feasible_point(self):
        trace = run_homotopy(PLUS, HomotopyParams(kind="disj"))
        assert trace.reason == "target-met"
        assert len(trace.rows) == 1
        assert trace.x_final == pytest.approx([0.0, 0.0], abs=1e-9)
        assert trace.maxvio_final <= 1e-12
        assert maxvio(PLUS, trace.x_final) == trace.maxvio_final

    def test_ralph1_kinked_run(self):
        trace = run_homotopy(RALPH1, HomotopyParams(kind="disj"))
        assert trace.reason == "target-met"
        assert abs(trace.f_final) <= 1e-6
        assert trace.maxvio_final <= 1e-6
        # the relaxed optima approach the limit value from below
        assert trace.f_final <= 0.0
        assert len(trace.rows) >= 3

    def test_product_cap_run_shrinks_in_powers(self):
        params = HomotopyParams(kind="scholtes", shrink=1e-2)
        trace = run_homotopy(EQUALIZE, params)
        assert trace.reason == "target-met"
        assert trace.maxvio_final <= params.eps
        assert maxvio(EQUALIZE, trace.x_final) <= params.eps
        assert len(trace.rows) >= 2
        # every round must yield a usable approximate solution; the tightly
        # curved cap may cost a max-iter round mid-path
        assert all(r.status in ("converged", "max-iter") for r in trace.rows)
        assert trace.rows[-1].status == "converged"
        ts = [r.t for r in trace.rows]
        assert ts[0] == params.t0
        for a, b in zip(ts, ts[1:]):
            assert b < a
            assert b >= params.t_min
            level = math.log(b / a) / math.log(1e-2)
            assert abs(level - round(level)) < 1e-9
            assert round(level) >= 1

    def test_infinite_eps_solves_once(self):
        trace = run_homotopy(EQUALIZE, HomotopyParams(kind="scholtes", eps=np.inf))
        assert len(trace.rows) == 1
        assert trace.reason == "target-met"
        assert trace.rows[0].t == 1.0

    def test_unbounded_relaxations_abort(self):
        trace = run_homotopy(MINUS, HomotopyParams(kind="disj"))
        assert trace.reason == "subproblem-failure"
        assert len(trace.rows) == 2
        assert all(r.status == "numerical-failure" for r in trace.rows)
        assert trace.maxvio_final == min(r.maxvio for r in trace.rows)

    def test_warm_starts_chain_through_the_trace(self, monkeypatch):
        starts = []
        real = homotopy_module.solve_nlp

        def recording(nlp, x0=None, options=None):
            starts.append(np.array(x0, dtype=float))
            return real(nlp, x0, options)

        monkeypatch.setattr(homotopy_module, "solve_nlp", recording)
        trace = run_homotopy(EQUALIZE, HomotopyParams(kind="scholtes", shrink=1e-2))
        assert len(starts) == len(trace.rows)
        assert np.array_equal(starts[0], EQUALIZE.start_array)
        for row, start in zip(trace.rows[:-1], starts[1:]):
            assert np.array_equal(start, row.x)

    def test_trace_is_immutable_record(self):
        trace = run_homotopy(PLUS, HomotopyParams(kind="disj"))
        assert isinstance(trace, RunTrace)
        with pytest.raises(AttributeError):
            trace.reason = "other"


class TestTraceCsv:
    def test_header_and_formatting(self):
        trace = run_homotopy(PLUS, HomotopyParams(kind="disj"))
        text = trace_to_csv(trace)
        lines = text.strip().splitlines()
        assert lines[0] == "k,t,x1,x2,maxvio,status,millis"
        assert len(lines) == 1 + len(trace.rows)
        fields = lines[1].split(",")
        assert int(fields[0]) == 0
        assert float(fields[1]) == trace.rows[0].t
        assert float(fields[2]) == trace.rows[0].x[0]
        assert float(fields[3]) == trace.rows[0].x[1]
        assert float(fields[4]) == trace.rows[0].maxvio
        assert fields[5] == trace.rows[0].status

    def test_seventeen_digit_round_trip(self, tmp_path):
        trace = run_homotopy(RALPH1, HomotopyParams(kind="disj"))
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + len(trace.rows)
        for row, line in zip(trace.rows, lines[1:]):
            fields = line.split(",")
            assert float(fields[1]) == row.t  # bit-exact decimal round trip
            assert float(fields[2]) == row.x[0]
            assert float(fields[3]) == row.x[1]
            assert float(fields[4]) == row.maxvio
