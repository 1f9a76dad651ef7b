import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpineq.estimators import (Dataset, estimate_on_points, g_hat, make_grid, pop_rho_sq,
                               rho_hat_cross, rho_hat_sq)
from lpineq.kernels import get_kernel
from lpineq.simulation import make_dgp

from conftest import synthetic

K1 = get_kernel("quartic2u")


def naive(data, kernel, h, x):
    """Double loop straight from the definitions."""
    n, d, J = data.n, data.d, data.J
    g = np.zeros(J)
    rho = np.zeros((J, J))
    for i in range(n):
        kv = 1.0
        for s in range(d):
            u = (x[s] - data.x[i, s]) / h
            kv *= 1.5 * (1 - 4 * u * u) if abs(u) <= 0.5 else 0.0
        for j in range(J):
            g[j] += data.y[i, j] * kv
            for k in range(J):
                rho[j, k] += data.y[i, j] * data.y[i, k] * kv * kv
    return g / (n * h ** d), rho / (n * h ** d)


def test_single_point_examples():
    data = Dataset(np.array([[0.5], [3.0]]), np.array([[2.0], [0.0]]))
    # second observation sits outside the window, so n = 2 halves the one-point value
    assert g_hat(data, 0, K1, 1.0, 0.5) == pytest.approx(3.0 / 2)
    assert rho_hat_sq(data, 0, K1, 1.0, 0.5) == pytest.approx(9.0 / 2)


def test_zero_outcomes():
    data = Dataset(np.random.default_rng(0).uniform(size=50), np.zeros(50))
    est = estimate_on_points(data, K1, 0.2, make_grid(((0, 1),), 32).points)
    assert np.all(est.g == 0) and np.all(est.rho == 0)


@pytest.mark.parametrize("d,J", [(1, 1), (1, 2), (2, 2)])
def test_against_naive(d, J):
    data = synthetic(100, d, J, seed=d * 10 + J)
    kernel = get_kernel("quartic2u", d)
    h = 0.3
    pts = np.random.default_rng(5).uniform(0, 1, size=(15, d))
    est = estimate_on_points(data, kernel, h, pts)
    scale = np.max(np.abs(data.y)) ** 2 * 2.25 ** d / h ** d
    for i, x in enumerate(pts):
        g, rho = naive(data, kernel, h, x)
        assert np.allclose(est.g[i], g, rtol=0, atol=1e-12 * scale)
        assert np.allclose(est.rho[i], rho, rtol=0, atol=1e-12 * scale)


def test_pointwise_wrappers():
    data = synthetic(80, 1, 2, seed=3)
    x = 0.41
    g, rho = naive(data, K1, 0.25, [x])
    assert g_hat(data, 1, K1, 0.25, x) == pytest.approx(g[1], abs=1e-13)
    assert rho_hat_sq(data, 0, K1, 0.25, x) == pytest.approx(rho[0, 0], abs=1e-13)
    assert rho_hat_cross(data, 0, 1, K1, 0.25, x) == pytest.approx(rho[0, 1], abs=1e-13)
    assert rho_hat_cross(data, 1, 1, K1, 0.25, x) == rho_hat_sq(data, 1, K1, 0.25, x)


def test_errors():
    data = synthetic(20)
    with pytest.raises(ValueError):
        g_hat(data, 0, K1, 0.0, 0.5)
    with pytest.raises(IndexError):
        g_hat(data, 1, K1, 0.2, 0.5)
    with pytest.raises(ValueError):
        Dataset(np.array([[0.1]]), np.array([[1.0]]))
    with pytest.raises(ValueError):
        Dataset(np.array([0.1, np.nan]), np.array([1.0, 2.0]))


def test_cross_symmetry_and_cauchy_schwarz():
    data = synthetic(300, 1, 3, seed=9)
    est = estimate_on_points(data, K1, 0.15, make_grid(((0.05, 0.95),), 64).points)
    assert np.array_equal(est.rho, np.transpose(est.rho, (0, 2, 1)))
    diag = est.rho_sq
    bound = np.sqrt(diag[:, :, None] * diag[:, None, :])
    assert np.all(np.abs(est.rho) <= bound * (1 + 1e-12) + 1e-300)


def test_cross_zero_column():
    data = synthetic(100, 1, 2, seed=1)
    data = data.with_y(np.column_stack([data.y[:, 0], np.zeros(100)]))
    assert rho_hat_cross(data, 0, 1, K1, 0.3, 0.5) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_linearity(a, b, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(size=60)
    y1, y2 = r.normal(size=60), r.normal(size=60)
    pts = make_grid(((0, 1),), 16).points
    e = lambda y: estimate_on_points(Dataset(x, y), K1, 0.2, pts, cross=False).g[:, 0]
    combo = e(a * y1 + b * y2)
    scale = 1e-12 * (abs(a) + abs(b) + 1) * np.max(np.abs(np.r_[y1, y2])) * 10
    assert np.allclose(combo, a * e(y1) + b * e(y2), rtol=0, atol=scale)


def test_scale():
    data = synthetic(200, seed=4)
    pts = make_grid(((0, 1),), 40).points
    base = estimate_on_points(data, K1, 0.2, pts).rho_sq
    scaled = estimate_on_points(data.with_y(-2.5 * data.y), K1, 0.2, pts).rho_sq
    assert np.allclose(scaled, 6.25 * base, rtol=1e-13, atol=0)


def test_permutation():
    data = synthetic(500, 2, 2, seed=6)
    perm = np.random.default_rng(0).permutation(500)
    shuffled = Dataset(data.x[perm], data.y[perm])
    kernel = get_kernel("quartic2u", 2)
    pts = make_grid(((0.1, 0.9), (0.1, 0.9)), 12).points
    a = estimate_on_points(data, kernel, 0.2, pts)
    b = estimate_on_points(shuffled, kernel, 0.2, pts)
    assert np.allclose(a.g, b.g, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.rho, b.rho, rtol=1e-12, atol=1e-14)


def test_locality():
    data = synthetic(100, seed=2)
    x, h = 0.3, 0.1
    before = g_hat(data, 0, K1, h, x)
    far = Dataset(np.r_[data.x[:, 0], 0.9], np.r_[data.y[:, 0], 50.0])
    assert g_hat(far, 0, K1, h, x) == pytest.approx(before * 100 / 101, rel=1e-13)


def test_pop_rho_sq_examples():
    assert pop_rho_sq(make_dgp("dgp0-homo"), K1, 0.3) == pytest.approx(1.2)
    assert pop_rho_sq(make_dgp("dgp0-hetero"), K1, 0.5) == pytest.approx(0.3)
    assert pop_rho_sq(make_dgp("dgp0-homo"), K1, 1.5) == 0.0
    with pytest.raises(TypeError):
        pop_rho_sq(object(), K1, 0.3)


def test_grid_invariants():
    grid = make_grid(((0.05, 0.95), (0.0, 2.0)), 10)
    assert grid.size == 100
    assert grid.cell_weights.sum() == pytest.approx(1.8)
    assert np.all(grid.cell_weights > 0)
    assert np.all((grid.points[:, 0] > 0.05) & (grid.points[:, 0] < 0.95))
    with pytest.raises(ValueError):
        make_grid(((1.0, 0.0),))
