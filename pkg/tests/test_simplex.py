import numpy as np
import pytest
from scipy.optimize import linprog

from lrevents import simplex


def test_textbook_lp():
    # max x + y s.t. x + 2y <= 4, 3x + y <= 6  ->  standard form with slacks
    A = np.array([[1.0, 2.0, 1.0, 0.0], [3.0, 1.0, 0.0, 1.0]])
    b = np.array([4.0, 6.0])
    c = np.array([-1.0, -1.0, 0.0, 0.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.OPTIMAL
    assert res.objective == pytest.approx(-(8 / 5 + 6 / 5))
    assert res.x[:2] == pytest.approx([8 / 5, 6 / 5])


def test_equality_only():
    # x = 2 with a free cost; unique feasible point
    A = np.array([[1.0]])
    b = np.array([2.0])
    c = np.array([5.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.OPTIMAL
    assert res.x == pytest.approx([2.0])
    assert res.objective == pytest.approx(10.0)


def test_infeasible_detected():
    # x1 + x2 = 1 and x1 + x2 = 3 cannot both hold
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 3.0])
    c = np.array([1.0, 1.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.INFEASIBLE


def test_unbounded_detected():
    # min -x s.t. x - y = 0: push x = y -> infinity
    A = np.array([[1.0, -1.0]])
    b = np.array([0.0])
    c = np.array([-1.0, 0.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.UNBOUNDED


def test_redundant_row_dropped():
    # second row is twice the first; duals for dropped rows come back 0
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    b = np.array([1.0, 2.0])
    c = np.array([3.0, 1.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.OPTIMAL
    assert res.objective == pytest.approx(1.0)
    assert res.x == pytest.approx([0.0, 1.0])


def test_negative_rhs_handled():
    # -x1 = -2 flips to x1 = 2; duals are reported against the original rows
    A = np.array([[-1.0, 0.0], [0.0, 1.0]])
    b = np.array([-2.0, 1.0])
    c = np.array([1.0, 1.0])
    res = simplex.solve_standard_form(A, b, c)
    assert res.status == simplex.OPTIMAL
    assert res.x == pytest.approx([2.0, 1.0])
    # y'A <= c' must hold for the original orientation
    assert (res.duals @ A <= c + 1e-9).all()


def test_matches_scipy_on_random_instances():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(200):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(m, 9))
        A = rng.normal(size=(m, n))
        x_feas = rng.uniform(0, 2, size=n)
        b = A @ x_feas  # guarantees feasibility
        c = rng.normal(size=n)
        ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
        res = simplex.solve_standard_form(A, b, c)
        if ref.status == 3:
            assert res.status == simplex.UNBOUNDED
            continue
        assert ref.status == 0
        assert res.status == simplex.OPTIMAL
        assert res.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.allclose(A @ res.x, b, atol=1e-8)
        assert (res.x >= -1e-9).all()
        checked += 1
    assert checked > 100


def test_duals_certify_optimality():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m, n = 3, 8
        A = rng.normal(size=(m, n))
        b = A @ rng.uniform(0.5, 1.5, size=n)
        c = rng.uniform(0.1, 2.0, size=n)  # positive costs keep it bounded
        res = simplex.solve_standard_form(A, b, c)
        assert res.status == simplex.OPTIMAL
        # weak duality with equality at the optimum, and dual feasibility
        assert res.duals @ b == pytest.approx(res.objective, abs=1e-7)
        assert (res.duals @ A <= c + 1e-7).all()
