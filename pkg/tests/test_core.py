from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from conftest import random_instance, realizable_instance
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpexplain.core import (
    ExplanationDataset,
    LocalLoss,
    loss_eval,
    loss_gradient,
    minimize_quadratic_on_ball,
    project_ball,
    solve_exact,
    solve_optimal,
    utility_loss,
)
from dpexplain.weights import WeightSpec, alpha_stable

W = WeightSpec(1.0)


def brute_loss(phi, z, data, w):
    total = 0.0
    for x, f in zip(data.points, data.labels):
        d = x - z
        total += w(math.sqrt(sum(v * v for v in d))) * (sum(p * v for p, v in zip(phi, d)) - f) ** 2
    return total / data.m


# --- loss and gradient ----------------------------------------------------


def test_loss_examples(three_point):
    assert loss_eval([0.5, 0.5], [0, 0], three_point, W) == pytest.approx(0.2083333333333333, abs=1e-12)
    zero = ExplanationDataset([[1.0, 2.0], [3.0, -1.0]], [0.0, 0.0])
    assert loss_eval([0.0, 0.0], [0.3, 0.1], zero, W) == 0.0
    z = np.array([0.4, -0.2])
    single = ExplanationDataset([z], [1.0])
    assert loss_eval([0.6, 0.8], z, single, W) == 1.0


def test_loss_matches_term_by_term_sum(three_point):
    # alpha values 1/4, 1/4, 1/12; residuals 0.5-1, 0.5+1, 1-1
    expected = (0.25 * 0.25 + 0.25 * 2.25 + 0.0) / 3
    assert loss_eval([0.5, 0.5], [0, 0], three_point, W) == pytest.approx(expected, abs=1e-15)


def test_gradient_examples(three_point):
    g = loss_gradient([0.5, 0.5], [0, 0], three_point, W)
    np.testing.assert_allclose(g, [-1 / 12, 0.25], atol=1e-15)
    zero = ExplanationDataset([[1.0, 2.0], [3.0, -1.0]], [0.0, 0.0])
    np.testing.assert_array_equal(loss_gradient([0.0, 0.0], [0, 0], zero, W), [0.0, 0.0])


def central_difference(phi, z, data, h=1e-5):
    g = np.zeros_like(phi)
    for i in range(phi.size):
        e = np.zeros_like(phi)
        e[i] = h
        g[i] = (loss_eval(phi + e, z, data, W) - loss_eval(phi - e, z, data, W)) / (2 * h)
    return g


def test_gradient_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, m = int(rng.integers(1, 11)), int(rng.integers(1, 201))
        data, z = random_instance(rng, m, n)
        phi = project_ball(rng.normal(size=n))
        g = loss_gradient(phi, z, data, W)
        fd = central_difference(phi, z, data)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-8)


def test_quadratic_form_matches_direct_sum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        data, z = random_instance(rng, 60, 4)
        loss = LocalLoss(z, data, W)
        phi = project_ball(rng.normal(size=4))
        np.testing.assert_allclose(loss.gradient(phi), loss_gradient(phi, z, data, W), rtol=1e-10, atol=1e-14)
        assert loss.value(phi) == pytest.approx(loss_eval(phi, z, data, W), rel=1e-10, abs=1e-14)
        assert loss.exact_value(phi) == loss_eval(phi, z, data, W)


def test_loss_against_brute_force_loop():
    rng = np.random.default_rng(11)
    data, z = random_instance(rng, 40, 3)
    phi = project_ball(rng.normal(size=3))
    assert loss_eval(phi, z, data, W) == pytest.approx(brute_loss(phi, z, data, W), rel=1e-12)


def test_sum_is_order_insensitive():
    rng = np.random.default_rng(5)
    data, z = random_instance(rng, 5000, 6)
    phi = project_ball(rng.normal(size=6))
    perm = rng.permutation(data.m)
    shuffled = ExplanationDataset(data.points[perm], data.labels[perm])
    a, b = loss_eval(phi, z, data, W), loss_eval(phi, z, shuffled, W)
    assert abs(a - b) <= 1e-12 * max(a, 1e-300)


def test_errors(three_point):
    with pytest.raises(ValueError):
        loss_eval([0.5, 0.5, 0.5], [0, 0], three_point, W)
    with pytest.raises(ValueError):
        loss_eval([0.5, 0.5], [0, 0, 0], three_point, W)
    with pytest.raises(ValueError, match="empty dataset"):
        ExplanationDataset(np.empty((0, 2)), [])
    with pytest.raises(ValueError):
        ExplanationDataset([[0.0, 1.0]], [1.5])
    with pytest.raises(ValueError):
        ExplanationDataset([[0.0, np.nan]], [0.5])
    assert ExplanationDataset([[0.0, 1.0]], [5.0], label_bound=None).labels[0] == 5.0


# --- sensitivity and convexity -------------------------------------------


def test_gradient_sensitivity_under_removal():
    rng = np.random.default_rng(17)
    worst = -np.inf
    for _ in range(500):
        n, m = int(rng.integers(1, 21)), int(rng.integers(2, 501))
        data, z = random_instance(rng, m, n, spread=rng.choice([0.1, 0.5, 2.0]))
        phi = project_ball(rng.normal(size=n) * rng.choice([0.2, 5.0]))
        drop = int(rng.integers(m))
        neighbour = data.subset(np.delete(np.arange(m), drop))
        gap = np.linalg.norm(
            loss_gradient(phi, z, data, W) - loss_gradient(phi, z, neighbour, W, normalizer=m)
        )
        worst = max(worst, gap - 1.0 / m)
    assert worst <= 1e-9


@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0, 1))
@settings(max_examples=100)
def test_loss_convex_along_segments(seed, t):
    rng = np.random.default_rng(seed)
    data, z = random_instance(rng, 30, 3)
    a, b = project_ball(rng.normal(size=3)), project_ball(rng.normal(size=3))
    mid = t * a + (1 - t) * b
    lhs = loss_eval(mid, z, data, W)
    rhs = t * loss_eval(a, z, data, W) + (1 - t) * loss_eval(b, z, data, W)
    assert lhs <= rhs + 1e-12


# --- projection -----------------------------------------------------------


def test_projection_examples():
    np.testing.assert_array_equal(project_ball([0.3, 0.4]), [0.3, 0.4])
    np.testing.assert_allclose(project_ball([3.0, 4.0]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(project_ball([0.0, 0.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        project_ball([np.inf, 0.0])


vectors = arrays(np.float64, 4, elements=st.floats(-1e6, 1e6, allow_nan=False))


@given(vectors, vectors)
def test_projection_idempotent_and_nonexpansive(a, b):
    pa, pb = project_ball(a), project_ball(b)
    assert np.linalg.norm(pa) <= 1 + 1e-12
    np.testing.assert_allclose(project_ball(pa), pa, atol=1e-15)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-12


# --- solvers --------------------------------------------------------------


def test_solver_realizable():
    rng = np.random.default_rng(2)
    for _ in range(3):
        data, z, g = realizable_instance(rng, 80, 4)
        phi = solve_optimal(z, data, W)
        assert loss_eval(phi, z, data, W) <= 1e-6


def test_solver_zero_labels():
    rng = np.random.default_rng(4)
    data, z = random_instance(rng, 50, 3)
    zero = ExplanationDataset(data.points, np.zeros(data.m))
    phi = solve_optimal(z, zero, W, init=[0.5, -0.5, 0.2])
    assert loss_eval(phi, z, zero, W) <= loss_eval(np.zeros(3), z, zero, W) + 1e-6


def test_solver_against_grid_search():
    rng = np.random.default_rng(9)
    data, z = random_instance(rng, 50, 3)
    loss = LocalLoss(z, data, W)
    axis = np.arange(-1.0, 1.0 + 1e-9, 0.02)
    grid = np.array(list(itertools.product(axis, axis, axis)))
    grid = grid[np.linalg.norm(grid, axis=1) <= 1.0]
    vals = np.array([loss_eval(p, z, data, W) for p in grid[:: max(1, len(grid) // 20000)]])
    # full grid through the quadratic form; a subsample is cross-checked directly above
    full = 0.5 * np.einsum("ij,jk,ik->i", grid, loss.A, grid) - grid @ loss.b + loss.offset
    assert full.min() <= vals.min() + 1e-12
    best = loss_eval(solve_optimal(z, data, W), z, data, W)
    assert abs(best - full.min()) <= 2e-3
    assert best <= full.min() + 1e-12


def test_exact_solver_matches_iterative():
    rng = np.random.default_rng(21)
    for _ in range(10):
        data, z = random_instance(rng, 100, 5)
        a = solve_optimal(z, data, W)
        b = solve_exact(z, data, W)
        assert loss_eval(a, z, data, W) == pytest.approx(loss_eval(b, z, data, W), abs=1e-4)
        assert loss_eval(b, z, data, W) <= loss_eval(a, z, data, W) + 1e-10


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60)
def test_exact_solver_kkt(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    B = rng.normal(size=(n, n)) * rng.choice([0.01, 1.0, 10.0])
    A = B @ B.T
    if rng.random() < 0.3:
        A[:, 0] = A[0, :] = 0.0  # singular direction
    b = rng.normal(size=n) * rng.choice([0.01, 1.0, 100.0])
    x = minimize_quadratic_on_ball(A, b)
    assert np.linalg.norm(x) <= 1 + 1e-9
    f = lambda v: 0.5 * v @ A @ v - b @ v  # noqa: E731
    for _ in range(200):
        y = project_ball(rng.normal(size=n) * rng.choice([0.1, 1.0, 10.0]))
        assert f(x) <= f(y) + 1e-9 * max(1.0, abs(f(y)))


def test_solver_trace_and_validation():
    rng = np.random.default_rng(1)
    data, z = random_instance(rng, 20, 2)
    trace = []
    phi = solve_optimal(z, data, W, oracle_iters=5, trace=trace)
    assert len(trace) == 6
    np.testing.assert_array_equal(trace[-1], phi)
    assert all(np.linalg.norm(p) <= 1 + 1e-9 for p in trace)
    with pytest.raises(ValueError):
        solve_optimal(z, data, W, oracle_iters=0)


# --- utility loss ---------------------------------------------------------


def test_utility_loss():
    rng = np.random.default_rng(6)
    data, z, g = realizable_instance(rng, 60, 3)
    ref = solve_optimal(z, data, W)
    assert utility_loss(ref, z, data, W, ref) == 0.0
    zero = np.zeros(3)
    assert utility_loss(zero, z, data, W, ref) == pytest.approx(loss_eval(zero, z, data, W), abs=1e-6)
    for _ in range(50):
        phi = project_ball(rng.normal(size=3))
        assert utility_loss(phi, z, data, W, ref) >= -1e-4


def test_alpha_callable_accepted():
    rng = np.random.default_rng(8)
    data, z = random_instance(rng, 10, 2)
    w = lambda d: alpha_stable(d, 1.0)  # noqa: E731
    assert loss_eval([0.1, 0.2], z, data, w) == loss_eval([0.1, 0.2], z, data, W)
