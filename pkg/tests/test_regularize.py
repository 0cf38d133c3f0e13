"""Tests for the four relaxation families and their feasible-set geometry.

Continuity sweeps and random-sampling set comparisons below are the
independent oracles for the piecewise constraint functions: they check the
implementation against the defining regional formulas and against each
other's feasible sets, never against the functions under test themselves.
"""

import numpy as np
import pytest

from mpccreg.model import make_problem, parse_problem
from mpccreg import regularize
from mpccreg.regularize import (
    DisjunctiveNlp,
    SmoothNlp,
    disj_active_sets,
    disjunctive,
    kanzow_schwartz,
    ks_phi,
    membership_disjunctive,
    membership_ks,
    membership_mpcc,
    membership_qpf,
    membership_scholtes,
    quadrant_penalty,
    quadrant_penalty_g,
    scholtes,
)
from mpccreg.model import ClassificationRefusedError


PROTOTYPE = make_problem(
    n=2,
    objective="(x1-1)^2 + (x2-2)^2",
    pairs=[("x1", "x2")],
    start=[1.0, 1.0],
    name="prototype",
)

SADDLE_LIMIT = parse_problem(
    """
problem saddle-limit
vars x1 x2 x3 x4
objective -x1 - x1*x2 + x3^2/2 + (x4-1)^2
pair (x1, x2)
pair (x2 - x3, x4)
start 0 0 0 1
"""
)

PLUS = make_problem(
    n=2, objective="x1 + x2", pairs=[("x1", "x2")], start=[1.0, 1.0], name="plus"
)

SHIFTED = make_problem(
    n=2,
    objective="x1^2 + x2^2",
    pairs=[("x1", "1 - x2")],
    start=[0.1, 0.1],
    name="shifted",
)


class TestKsPhi:
    def test_product_branch(self):
        value, grad = ks_phi(1.0, 1.0)
        assert value == 1.0
        np.testing.assert_allclose(grad, [1.0, 1.0])

    def test_quadratic_branch(self):
        value, grad = ks_phi(-1.0, -2.0)
        assert value == -2.5
        np.testing.assert_allclose(grad, [1.0, 2.0])

    def test_branch_boundary_agreement(self):
        for a in np.linspace(-3.0, 3.0, 25):
            assert ks_phi(a, -a)[0] == pytest.approx(-(a**2), abs=1e-15)
        value, grad = ks_phi(0.0, 0.0)
        assert value == 0.0
        np.testing.assert_allclose(grad, [0.0, 0.0])

    def test_continuity_sweep_across_switching_line(self):
        rng = np.random.default_rng(6)
        h = 1e-9
        for _ in range(1000):
            a = rng.uniform(-5.0, 5.0)
            above, _ = ks_phi(a + h, -a)
            below, _ = ks_phi(a - h, -a)
            assert abs(above - below) <= 1e-8 * (1 + abs(a))

    def test_gradient_continuity_off_origin(self):
        rng = np.random.default_rng(7)
        h = 1e-9
        for _ in range(1000):
            a = rng.uniform(0.5, 5.0) * rng.choice([-1.0, 1.0])
            _, g_above = ks_phi(a + h, -a)
            _, g_below = ks_phi(a - h, -a)
            np.testing.assert_allclose(g_above, g_below, atol=1e-7)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        h = 1e-7
        for _ in range(200):
            a, b = rng.uniform(-3.0, 3.0, size=2)
            if abs(a + b) < 1e-3:
                continue  # keep FD stencils inside one branch
            _, (ga, gb) = ks_phi(a, b)
            fa = (ks_phi(a + h, b)[0] - ks_phi(a - h, b)[0]) / (2 * h)
            fb = (ks_phi(a, b + h)[0] - ks_phi(a, b - h)[0]) / (2 * h)
            np.testing.assert_allclose([ga, gb], [fa, fb], atol=1e-6)


class TestQuadrantPenalty:
    def test_zero_region(self):
        assert quadrant_penalty_g(-1.0, -7.0, 2.0) == 0.0
        assert quadrant_penalty_g(0.0, -1.0, 2.0) == 0.0
        assert quadrant_penalty_g(1.0, 0.0, 2.0) == 0.0
        assert quadrant_penalty_g(1.0, 3.0, 2.0) == 0.0

    def test_u_square_branch(self):
        assert quadrant_penalty_g(1.0, -4.0, 2.0) == 1.0

    def test_v_square_branch(self):
        assert quadrant_penalty_g(4.0, -1.0, 2.0) == 1.0

    def test_middle_wedge_value(self):
        assert quadrant_penalty_g(1.0, -1.0, 2.0) == pytest.approx(2.0 / 3.0)

    def test_beta_validated(self):
        with pytest.raises(ValueError):
            quadrant_penalty_g(1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            quadrant_penalty_g(1.0, -1.0, 0.5)

    @pytest.mark.parametrize("beta", [1.5, 2.0, 3.0])
    def test_nonnegative_and_zero_set(self, beta):
        rng = np.random.default_rng(9)
        U = rng.uniform(-3.0, 3.0, size=2000)
        V = rng.uniform(-3.0, 3.0, size=2000)
        for u, v in zip(U, V):
            g = quadrant_penalty_g(u, v, beta)
            assert g >= 0.0
            if u <= 0.0 or v >= 0.0:
                assert g == 0.0
            else:
                assert g > 0.0

    @pytest.mark.parametrize("beta", [1.5, 2.0, 3.0])
    def test_continuity_sweep_across_wedge_borders(self, beta):
        rng = np.random.default_rng(10)
        h = 1e-9
        for _ in range(1000):
            v = -rng.uniform(0.1, 4.0)
            for border_u in (-v / beta, -beta * v):
                lo = quadrant_penalty_g(border_u - h, v, beta)
                hi = quadrant_penalty_g(border_u + h, v, beta)
                assert abs(hi - lo) <= 1e-7

    @pytest.mark.parametrize("beta", [1.5, 2.0])
    def test_outer_boundary_continuity(self, beta):
        h = 1e-9
        for u in np.linspace(0.1, 3.0, 100):
            # v crossing 0 from below: the penalty must vanish continuously
            assert quadrant_penalty_g(u, -h, beta) <= 1e-15
        for v in np.linspace(-3.0, -0.1, 100):
            assert quadrant_penalty_g(h, v, beta) <= 1e-15

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        beta = 2.0
        h = 1e-7
        checked = 0
        while checked < 200:
            u = rng.uniform(-3.0, 3.0)
            v = rng.uniform(-3.0, 3.0)
            if v < 0 and min(abs(u - (-v / beta)), abs(u - (-beta * v)), abs(u), abs(v)) < 1e-3:
                continue  # stay clear of the borders for the FD stencil
            gu_fd = (
                quadrant_penalty_g(u + h, v, beta) - quadrant_penalty_g(u - h, v, beta)
            ) / (2 * h)
            gv_fd = (
                quadrant_penalty_g(u, v + h, beta) - quadrant_penalty_g(u, v - h, beta)
            ) / (2 * h)
            gu, gv = regularize.quadrant_penalty_g_grad(u, v, beta)
            np.testing.assert_allclose([gu, gv], [gu_fd, gv_fd], atol=1e-6)
            checked += 1


class TestBuilders:
    def test_scholtes_feasibility(self):
        t = 1.0
        assert membership_scholtes(PROTOTYPE, t, np.array([0.5, 0.5]))
        assert not membership_scholtes(PROTOTYPE, t, np.array([2.0, 1.0]))

    def test_scholtes_structure(self):
        nlp = scholtes(PROTOTYPE, t=0.5)
        tags = [c.tag for c in nlp.ineq]
        assert ("scholtes-product", 0) in tags
        assert ("lower-F1", 0) in tags and ("lower-F2", 0) in tags
        assert len(nlp.eq) == 0
        assert nlp.t == 0.5

    def test_side_constraints_copied(self):
        p = make_problem(
            n=3,
            objective="x3",
            pairs=[("x1", "x2")],
            ineq=["x3"],
            eq=["x1 - x3"],
            start=[0, 0, 0],
        )
        for builder in (scholtes, kanzow_schwartz):
            nlp = builder(p, t=1.0)
            assert ("side", 0) in [c.tag for c in nlp.ineq]
            assert ("side", 0) in [c.tag for c in nlp.eq]

    @pytest.mark.parametrize("builder", [scholtes, kanzow_schwartz, disjunctive])
    def test_positive_t_required(self, builder):
        with pytest.raises(ValueError):
            builder(PROTOTYPE, t=0.0)
        with pytest.raises(ValueError):
            builder(PROTOTYPE, t=-1.0)

    def test_quadrant_penalty_parameters(self):
        with pytest.raises(ValueError):
            quadrant_penalty(PROTOTYPE, t=0.0, beta=2.0)
        with pytest.raises(ValueError):
            quadrant_penalty(PROTOTYPE, t=1.0, beta=1.0)

    def test_ks_feasibility(self):
        assert membership_ks(PROTOTYPE, 1.0, np.array([0.5, 0.5]))
        nlp = kanzow_schwartz(PROTOTYPE, t=1.0)
        ks = [c for c in nlp.ineq if c.tag == ("ks-phi", 0)][0]
        # constraint is stored as -Phi >= 0; at (0.5, 0.5) Phi = -0.25
        assert ks.fun.value(np.array([0.5, 0.5])) == pytest.approx(0.25)

    def test_ks_gradient_vanishes_at_double_activity(self):
        t = 0.3
        nlp = kanzow_schwartz(PROTOTYPE, t=t)
        ks = [c for c in nlp.ineq if c.tag == ("ks-phi", 0)][0]
        np.testing.assert_allclose(ks.fun.grad(np.array([t, t])), [0.0, 0.0])

    def test_disjunctive_feasibility(self):
        t = 1.0
        assert membership_disjunctive(PROTOTYPE, t, np.array([0.5, 5.0]))
        assert not membership_disjunctive(PROTOTYPE, t, np.array([2.0, 3.0]))

    def test_qpf_feasibility(self):
        t = 1.0
        assert membership_qpf(PROTOTYPE, t, np.array([0.5, 5.0]))
        assert not membership_qpf(PROTOTYPE, t, np.array([2.0, 3.0]))

    def test_branch_nlp_patterns(self):
        disj = disjunctive(SADDLE_LIMIT, t=0.1)
        nlp = disj.branch_nlp("AB")
        tags = [c.tag for c in nlp.ineq]
        assert ("branch-A", 0) in tags
        assert ("branch-B", 1) in tags
        assert ("lower-F1", 0) in tags and ("lower-F2", 1) in tags
        with pytest.raises(ValueError):
            disj.branch_nlp("A")  # wrong length

    def test_provenance_tags_partition(self):
        p = make_problem(
            n=3,
            objective="0",
            pairs=[("x1", "x2"), ("x2", "x3")],
            ineq=["x3"],
            start=[0, 0, 0],
        )
        for builder in (scholtes, kanzow_schwartz):
            nlp = builder(p, t=1.0)
            assert len([c.tag for c in nlp.ineq]) == len(set(c.tag for c in nlp.ineq))
            pair_tags = [c.tag for c in nlp.ineq if c.tag[0] != "side"]
            assert all(0 <= j < p.n_pairs for _, j in pair_tags)


class TestFeasibleSetEquivalence:
    @pytest.mark.parametrize("t", [1.0, 0.1])
    def test_ks_equals_disjunctive_equals_qpf(self, t):
        rng = np.random.default_rng(12)
        X = rng.uniform(-1.0, 6.0, size=(2, 10_000))
        in_ks = membership_ks(PROTOTYPE, t, X)
        in_d = membership_disjunctive(PROTOTYPE, t, X)
        in_q = membership_qpf(PROTOTYPE, t, X)
        np.testing.assert_array_equal(in_ks, in_d)
        np.testing.assert_array_equal(in_q, in_d)

    def test_brute_force_disjunction(self):
        # membership computed from first principles: branch-wise comparison
        t = 0.7
        rng = np.random.default_rng(13)
        X = rng.uniform(-1.0, 4.0, size=(2, 5000))
        got = membership_disjunctive(PROTOTYPE, t, X)
        f1, f2 = X[0], X[1]
        expected = (f1 >= 0) & (f2 >= 0) & ((t - f1 >= 0) | (t - f2 >= 0))
        np.testing.assert_array_equal(got, expected)

    @pytest.mark.parametrize("t", [1.0, 0.1])
    def test_feasible_points_stay_feasible(self, t):
        # points of the complementarity set itself belong to every relaxation
        rng = np.random.default_rng(14)
        axis = rng.uniform(0.0, 5.0, size=2000)
        X = np.zeros((2, 2000))
        pick = rng.uniform(size=2000) < 0.5
        X[0, pick] = axis[pick]
        X[1, ~pick] = axis[~pick]
        assert membership_mpcc(PROTOTYPE, X).all()
        assert membership_scholtes(PROTOTYPE, t, X).all()
        assert membership_ks(PROTOTYPE, t, X).all()
        assert membership_disjunctive(PROTOTYPE, t, X).all()
        assert membership_qpf(PROTOTYPE, t, X).all()


class TestDisjActiveSets:
    def test_single_branch_activity(self):
        t = 0.1
        disj = disjunctive(SADDLE_LIMIT, t=t)
        sets = disj_active_sets(disj, np.array([t, 2 * t, t, 1.0]), tol=1e-9)
        assert set(sets.capped1) == {0, 1}
        assert set(sets.capped_both) == set()
        assert set(sets.capped2) == set()
        assert set(sets.zero1) == set() and set(sets.zero2) == set()

    def test_lower_bound_activity(self):
        disj = disjunctive(PLUS, t=0.5)
        sets = disj_active_sets(disj, np.array([0.0, 0.0]), tol=1e-9)
        assert set(sets.zero1) == {0} and set(sets.zero2) == {0}
        assert set(sets.capped_both) == set() and set(sets.capped1) == set() and set(sets.capped2) == set()

    def test_double_activity(self):
        t = 0.25
        disj = disjunctive(PLUS, t=t)
        sets = disj_active_sets(disj, np.array([t, t]), tol=1e-9)
        assert set(sets.capped_both) == {0}

    def test_near_boundary_not_h1(self):
        # complementary branch must be strictly above t for capped1 membership
        t = 0.5
        disj = disjunctive(PLUS, t=t)
        sets = disj_active_sets(disj, np.array([t, 0.2]), tol=1e-9)
        assert set(sets.capped1) == set()
        assert set(sets.capped_both) == set()

    def test_infeasible_point_refused(self):
        disj = disjunctive(PLUS, t=0.1)
        with pytest.raises(ClassificationRefusedError):
            disj_active_sets(disj, np.array([1.0, 1.0]), tol=1e-9)

    def test_shifted_pair_active_sets(self):
        t = 0.2
        disj = disjunctive(SHIFTED, t=t)
        sets = disj_active_sets(disj, np.array([0.0, 0.0]), tol=1e-9)
        assert set(sets.zero1) == {0}
        assert set(sets.zero2) == set()
