"""LAP layer: exactness against brute force, dual certificates, auction gap."""

import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from blindmatch.exceptions import NonFiniteError
from blindmatch.lap import solve_lap_auction, solve_lap_jv


def brute_force_lap(cost):
    """Independent oracle: enumerate all permutations (n <= 8)."""
    n = cost.shape[0]
    best = np.inf
    best_perm = None
    for perm in itertools.permutations(range(n)):
        val = sum(cost[i, perm[i]] for i in range(n))
        if val < best:
            best = val
            best_perm = perm
    return best, best_perm


def check_certificates(cost, sol, atol=1e-9):
    n = cost.shape[0]
    assert sorted(sol.assignment.tolist()) == list(range(n))
    reduced = cost - sol.u[:, None] - sol.v[None, :]
    assert reduced.min() >= -sol.epsilon - atol
    picked = reduced[np.arange(n), sol.assignment]
    assert picked.max() <= sol.epsilon + atol
    assert sol.objective == pytest.approx(cost[np.arange(n), sol.assignment].sum())
    assert sol.objective - sol.dual_value <= n * sol.epsilon + 1e-6


def test_jv_identity_structure():
    cost = 1.0 - np.eye(3)
    sol = solve_lap_jv(cost)
    assert sol.assignment.tolist() == [0, 1, 2]
    assert sol.objective == 0.0
    check_certificates(cost, sol)


def test_jv_two_by_two():
    cost = np.array([[1.0, 2.0], [3.0, 1.0]])
    sol = solve_lap_jv(cost)
    assert sol.assignment.tolist() == [0, 1]
    assert sol.objective == pytest.approx(2.0)
    check_certificates(cost, sol)


def test_jv_row_shift_invariance():
    rng = np.random.default_rng(0)
    cost = rng.random((6, 6))
    shift = rng.random(6)
    base = solve_lap_jv(cost)
    shifted = solve_lap_jv(cost + shift[:, None])
    assert base.assignment.tolist() == shifted.assignment.tolist()
    assert shifted.objective == pytest.approx(base.objective + shift.sum())


def test_jv_single_element():
    cost = np.array([[3.5]])
    sol = solve_lap_jv(cost)
    assert sol.assignment.tolist() == [0]
    assert sol.u[0] + sol.v[0] == pytest.approx(3.5)
    check_certificates(cost, sol)


def test_jv_matches_brute_force_small():
    rng = np.random.default_rng(1)
    for trial in range(200):
        n = int(rng.integers(1, 9))
        cost = rng.random((n, n))
        sol = solve_lap_jv(cost)
        oracle, _ = brute_force_lap(cost)
        assert sol.objective == pytest.approx(oracle, abs=1e-12)
        # strong duality for the exact solver
        assert sol.dual_value == pytest.approx(sol.objective, abs=1e-9)
        check_certificates(cost, sol)


def test_jv_matches_scipy_larger():
    rng = np.random.default_rng(2)
    for trial in range(20):
        n = int(rng.integers(10, 80))
        cost = rng.standard_normal((n, n))
        sol = solve_lap_jv(cost)
        rows, cols = linear_sum_assignment(cost)
        assert sol.objective == pytest.approx(cost[rows, cols].sum(), abs=1e-9)
        check_certificates(cost, sol)


def test_jv_rejects_non_finite():
    cost = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(NonFiniteError):
        solve_lap_jv(cost)


def test_auction_two_by_two():
    cost = np.array([[1.0, 2.0], [3.0, 1.0]])
    sol = solve_lap_auction(cost, 1e-6)
    assert sol.objective == pytest.approx(2.0, abs=2e-6)
    check_certificates(cost, sol)


def test_auction_identity_structure():
    cost = 1.0 - np.eye(5)
    sol = solve_lap_auction(cost, 1e-3)
    assert sol.assignment.tolist() == list(range(5))
    check_certificates(cost, sol)


def test_auction_requires_positive_epsilon():
    with pytest.raises(ValueError):
        solve_lap_auction(np.zeros((2, 2)), 0.0)


def test_auction_within_n_eps_of_jv():
    rng = np.random.default_rng(3)
    for trial in range(200):
        n = int(rng.integers(2, 51))
        cost = rng.random((n, n))
        eps = 10.0 ** rng.uniform(-6, -2)
        exact = solve_lap_jv(cost)
        approx = solve_lap_auction(cost, eps)
        assert approx.objective >= exact.objective - 1e-9
        assert approx.objective - exact.objective <= n * eps + 1e-9
        check_certificates(cost, approx)
        # the certified dual value is a true lower bound on the optimum
        assert approx.dual_value <= exact.objective + 1e-9


def test_auction_random_ten_by_ten():
    rng = np.random.default_rng(4)
    cost = rng.random((10, 10))
    exact = solve_lap_jv(cost)
    approx = solve_lap_auction(cost, 1e-4)
    assert abs(approx.objective - exact.objective) <= 10 * 1e-4
