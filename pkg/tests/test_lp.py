import numpy as np
import pytest

from adeqsim.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    format_problem,
    solve_lp,
)
from lp_oracle import enumerate_lp_minimum, random_bounded_instance


def build_problem(c, A_ub, b_ub, A_eq, b_eq, lo, up):
    prob = LpProblem()
    for j in range(len(c)):
        prob.add_var(obj=c[j], lo=lo[j], hi=up[j])
    for i in range(len(b_ub)):
        prob.add_row("<=", b_ub[i], [(j, A_ub[i][j]) for j in range(len(c))])
    for i in range(len(b_eq)):
        prob.add_row("==", b_eq[i], [(j, A_eq[i][j]) for j in range(len(c))])
    return prob


def test_min_x_above_three():
    prob = LpProblem()
    prob.add_var(obj=1.0, lo=-np.inf, hi=np.inf)
    prob.add_row(">=", 3.0, [(0, 1.0)])
    sol = solve_lp(prob)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(3.0, abs=1e-9)
    assert sol.objective == pytest.approx(3.0, abs=1e-9)


def test_contradictory_bounds_infeasible():
    prob = LpProblem()
    prob.add_var(obj=1.0, lo=0.0, hi=1.0)
    prob.add_row(">=", 2.0, [(0, 1.0)])
    sol = solve_lp(prob)
    assert sol.status == INFEASIBLE


def test_unbounded_descent():
    prob = LpProblem()
    prob.add_var(obj=-1.0, lo=0.0, hi=np.inf)
    sol = solve_lp(prob)
    assert sol.status == UNBOUNDED


def test_three_var_instance_matches_enumeration():
    # min -x0 - 2 x1 + x2 over a hand-built polytope
    c = [-1.0, -2.0, 1.0]
    A_ub = [[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]]
    b_ub = [4.0, 3.0, 5.0]
    lo = [0.0, 0.0, 0.0]
    up = [10.0, 10.0, 10.0]
    ref, _ = enumerate_lp_minimum(c, A_ub, b_ub, [], [], lo, up)
    sol = solve_lp(build_problem(c, A_ub, b_ub, [], [], lo, up))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(ref, abs=1e-9)


def test_equality_row_instance():
    # x0 + x1 = 2 with cheap x1
    c = [3.0, 1.0]
    A_eq = [[1.0, 1.0]]
    b_eq = [2.0]
    lo = [0.0, 0.0]
    up = [1.5, 1.5]
    ref, _ = enumerate_lp_minimum(c, [], [], A_eq, b_eq, lo, up)
    sol = solve_lp(build_problem(c, [], [], A_eq, b_eq, lo, up))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(ref, abs=1e-9)
    assert sol.x[1] == pytest.approx(1.5, abs=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_random_instances_match_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        m_ub = int(rng.integers(1, 5))
        m_eq = int(rng.integers(0, 2))
        inst = random_bounded_instance(rng, n, m_ub, m_eq)
        ref, _ = enumerate_lp_minimum(*inst)
        sol = solve_lp(build_problem(*inst))
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(ref, abs=1e-7, rel=1e-7)


def test_determinism_bitwise():
    rng = np.random.default_rng(7)
    inst = random_bounded_instance(rng, 5, 3, 1)
    a = solve_lp(build_problem(*inst))
    b = solve_lp(build_problem(*inst))
    assert a.objective == b.objective
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.duals, b.duals)


def test_primal_feasibility_and_duality_identity():
    rng = np.random.default_rng(99)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        m_ub = int(rng.integers(1, 4))
        c, A_ub, b_ub, A_eq, b_eq, lo, up = random_bounded_instance(rng, n, m_ub, 1)
        sol = solve_lp(build_problem(c, A_ub, b_ub, A_eq, b_eq, lo, up))
        assert sol.status == OPTIMAL
        x = sol.x
        scale = max(1.0, np.abs(b_ub).max(), np.abs(b_eq).max())
        assert np.all(A_ub @ x <= b_ub + 1e-8 * scale)
        assert np.all(np.abs(A_eq @ x - b_eq) <= 1e-8 * scale)
        assert np.all(x >= lo - 1e-8)
        assert np.all(x <= up + 1e-8)
        # c.x = b.y + sum_j rc_j x_j at optimality (complementary slackness)
        A_all = np.vstack([A_ub, A_eq])
        rc = np.asarray(c) - A_all.T @ sol.duals
        dual_obj = np.concatenate([b_ub, b_eq]) @ sol.duals + rc @ x
        assert sol.objective == pytest.approx(dual_obj, abs=1e-7 * scale)


def test_degenerate_ties_terminate():
    # many redundant rows through one vertex exercise Bland's rule
    prob = LpProblem()
    x = prob.add_var(obj=-1.0, lo=0.0, hi=10.0)
    y = prob.add_var(obj=-1.0, lo=0.0, hi=10.0)
    for k in range(6):
        prob.add_row("<=", 2.0, [(x, 1.0), (y, 1.0 + 1e-12 * k)])
    sol = solve_lp(prob)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(-2.0, abs=1e-8)


def test_fixed_variable_is_respected():
    prob = LpProblem()
    prob.add_var(obj=-5.0, lo=2.0, hi=2.0)
    prob.add_var(obj=1.0, lo=0.0, hi=3.0)
    prob.add_row(">=", 3.0, [(0, 1.0), (1, 1.0)])
    sol = solve_lp(prob)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(2.0, abs=1e-12)
    assert sol.x[1] == pytest.approx(1.0, abs=1e-9)


def test_format_problem_layout():
    prob = LpProblem(name="demo")
    prob.add_var(obj=1.0, lo=0.0, hi=2.0, name="a")
    prob.add_var(obj=0.0, lo=-1.0, hi=1.0, name="b")
    prob.add_row("<=", 1.5, [(0, 1.0), (1, -2.0)])
    text = format_problem(prob)
    lines = text.splitlines()
    assert lines[1].startswith("min:")
    assert "1*a + -2*b <= 1.5" in lines[2]
    assert lines[-1] == "-1 <= b <= 1"
