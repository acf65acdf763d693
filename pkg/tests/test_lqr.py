import numpy as np
import pytest
import scipy.linalg

from dadmpc.exceptions import NoConvergence
from dadmpc.lqr import design_lqr, riccati_iteration


def _scalar_riccati_root(a, b, q, r):
    """Positive root of p = q + a^2 p - a^2 p^2 b^2 / (r + b^2 p), by bisection."""
    g = lambda p: q + a * a * p - (a * p * b) ** 2 / (r + b * b * p) - p
    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) > 0 else (lo, mid)
    return 0.5 * (lo + hi)


def test_scalar_riccati_against_bisection():
    P, _ = riccati_iteration([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    p = P[0, 0]
    assert p == pytest.approx(_scalar_riccati_root(0.5, 1.0, 1.0, 1.0), abs=1e-9)
    res = 1 + 0.25 * p - 0.25 * p * p / (1 + p) - p
    assert abs(res) <= 1e-9


def test_benchmark_gain_is_stabilising(spec):
    A, B = spec.plant.a_matrix, spec.plant.b_matrix
    K = design_lqr(A, B, spec.mpc_config.q_matrix, spec.mpc_config.r_matrix)
    assert np.max(np.abs(np.linalg.eigvals(A - B @ K))) < 1


def test_benchmark_riccati_matches_scipy(spec):
    A, B = spec.plant.a_matrix, spec.plant.b_matrix
    Q, R = spec.mpc_config.q_matrix, spec.mpc_config.r_matrix
    P, _ = riccati_iteration(A, B, Q, R)
    np.testing.assert_allclose(P, scipy.linalg.solve_discrete_are(A, B, Q, R), atol=1e-7)


def test_zero_state_cost_on_stable_plant_gives_zero_gain():
    K = design_lqr([[0.5, 0.1], [0.0, 0.3]], [[1.0], [0.0]], np.zeros((2, 2)), [[1.0]])
    np.testing.assert_allclose(K, 0.0, atol=1e-12)


def test_unstabilisable_plant_raises():
    with pytest.raises(NoConvergence):
        design_lqr([[2.0]], [[0.0]], [[1.0]], [[1.0]])


def test_iteration_budget():
    with pytest.raises(NoConvergence):
        riccati_iteration([[0.99]], [[1.0]], [[1.0]], [[1.0]], tol=1e-30, max_iter=5)
