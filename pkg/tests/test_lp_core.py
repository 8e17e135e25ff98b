"""LP solver tests: hand cases, vertex-oracle agreement, KKT certificates."""

import math

import numpy as np
import pytest

from qnet.lp_core import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpSolution,
    check_feasible,
    dump_problem,
    solve,
    verify_optimality,
)
from oracles import random_box_lp, vertex_enumeration_optimum


def box_problem(c, G, h, l, u) -> LpProblem:
    return LpProblem(c=np.asarray(c, float), G=G, h=h, l=l, u=u)


class TestHandInstances:
    def test_single_constraint(self):
        sol = solve(box_problem([1.0], [[1.0]], [3.0], [0.0], [10.0]))
        assert sol.status == OPTIMAL
        assert sol.z[0] == pytest.approx(3.0, abs=1e-9)
        assert sol.objective_value == pytest.approx(3.0, abs=1e-9)

    def test_triangle(self):
        sol = solve(box_problem([1.0, 1.0], [[1.0, 1.0]], [1.0], [0.0, 0.0], [math.inf, math.inf]))
        assert sol.status == OPTIMAL
        assert sol.objective_value == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        # z <= -1 with z >= 0
        sol = solve(box_problem([1.0], [[1.0]], [-1.0], [0.0], [10.0]))
        assert sol.status == INFEASIBLE

    def test_unbounded(self):
        sol = solve(box_problem([1.0], [[-1.0]], [0.0], [0.0], [math.inf]))
        assert sol.status == UNBOUNDED

    def test_upper_bounds_bind(self):
        sol = solve(box_problem([2.0, 1.0], [[1.0, 1.0]], [5.0], [0.0, 0.0], [1.5, 1.5]))
        assert sol.status == OPTIMAL
        assert sol.z == pytest.approx([1.5, 1.5])

    def test_phase1_needed(self):
        # -z <= -2 means z >= 2; optimum minimizes z at 2 (c = -1).
        sol = solve(box_problem([-1.0], [[-1.0]], [-2.0], [0.0], [10.0]))
        assert sol.status == OPTIMAL
        assert sol.z[0] == pytest.approx(2.0, abs=1e-9)

    def test_no_rows(self):
        sol = solve(box_problem([1.0, -1.0], np.zeros((0, 2)), np.zeros(0), [0.0, 0.0], [4.0, 4.0]))
        assert sol.status == OPTIMAL
        assert sol.z == pytest.approx([4.0, 0.0])

    def test_no_vars_feasible_and_infeasible(self):
        sol = solve(LpProblem(c=np.zeros(0), G=np.zeros((1, 0)), h=np.array([1.0]), l=np.zeros(0), u=np.zeros(0)))
        assert sol.status == OPTIMAL and sol.objective_value == 0.0
        sol = solve(LpProblem(c=np.zeros(0), G=np.zeros((1, 0)), h=np.array([-1.0]), l=np.zeros(0), u=np.zeros(0)))
        assert sol.status == INFEASIBLE

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            LpProblem(c=np.zeros(2), G=np.zeros((1, 3)), h=np.zeros(1), l=np.zeros(3), u=np.zeros(3))
        with pytest.raises(ValueError):
            LpProblem(c=np.zeros(1), G=np.zeros((1, 1)), h=np.zeros(1), l=np.array([2.0]), u=np.array([1.0]))


class TestVertexOracleAgreement:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_dense_lps(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = 2 + seed % 5
        m = 1 + seed % 6
        c, G, h, l, u = random_box_lp(rng, n, m)
        want, _ = vertex_enumeration_optimum(c, G, h, l, u)
        sol = solve(box_problem(c, G, h, l, u))
        assert sol.status == OPTIMAL
        assert sol.objective_value == pytest.approx(want, abs=1e-7)
        assert check_feasible(box_problem(c, G, h, l, u), sol.z) <= 1e-8 * (1.0 + np.max(np.abs(h)))

    @pytest.mark.parametrize("seed", range(8))
    def test_certificates(self, seed):
        rng = np.random.default_rng(2000 + seed)
        c, G, h, l, u = random_box_lp(rng, 4 + seed % 3, 3 + seed % 4)
        sol = solve(box_problem(c, G, h, l, u))
        assert sol.status == OPTIMAL
        report = verify_optimality(box_problem(c, G, h, l, u), sol, tol=1e-6)
        assert report["ok"], report

    def test_scaling_survives_wide_magnitudes(self):
        # Coefficients spanning rate magnitudes (1e-5..1e7).
        c = np.array([9.7e6, 3.1e2, 1.4e-5])
        G = np.array([[1e7, 0.0, 1.0], [0.0, 1e-4, 2e6], [1.0, 1.0, 1.0]])
        h = np.array([5e6, 3e2, 1e3])
        l = np.zeros(3)
        u = np.array([1.0, 1e6, 0.5])
        want, _ = vertex_enumeration_optimum(c, G, h, l, u)
        sol = solve(box_problem(c, G, h, l, u))
        assert sol.status == OPTIMAL
        assert sol.objective_value == pytest.approx(want, rel=1e-9)


class TestDeterminismAndResiduals:
    def test_identical_problems_identical_solutions(self):
        rng = np.random.default_rng(77)
        c, G, h, l, u = random_box_lp(rng, 5, 5)
        s1 = solve(box_problem(c, G, h, l, u))
        s2 = solve(box_problem(c, G, h, l, u))
        assert np.array_equal(s1.z, s2.z)
        assert s1.objective_value == s2.objective_value
        assert s1.iterations == s2.iterations

    def test_check_feasible_reports_violation(self):
        prob = box_problem([1.0, 0.0], [[1.0, 1.0]], [1.0], [0.0, 0.0], [2.0, 2.0])
        assert check_feasible(prob, np.array([0.0, 0.0])) == 0.0
        assert check_feasible(prob, np.array([1.0, 0.5])) == pytest.approx(0.5)
        assert check_feasible(prob, np.array([-0.25, 0.0])) == pytest.approx(0.25)

    def test_degenerate_instance_terminates(self):
        # Many redundant constraints through the same vertex exercise the
        # stall counter / Bland fallback.
        n = 4
        G = np.vstack([np.eye(n), np.eye(n), np.ones((1, n))])
        h = np.concatenate([np.ones(n), np.ones(n), [float(n)]])
        c = np.ones(n)
        sol = solve(box_problem(c, G, h, np.zeros(n), np.full(n, 2.0)))
        assert sol.status == OPTIMAL
        assert sol.objective_value == pytest.approx(n, abs=1e-8)


class TestDump:
    def test_round_trippable_text(self):
        prob = box_problem([1.0, -2.0], [[1.0, 1.0]], [1.0], [0.0, 0.0], [1.0, math.inf])
        text = dump_problem(prob)
        lines = text.strip().splitlines()
        assert lines[0] == "lp 1 2"
        assert lines[1].startswith("c ")
        assert lines[-1].endswith("inf")
