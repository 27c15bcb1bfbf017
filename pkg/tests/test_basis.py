import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from holeale.basis import (cardinality, derivative_matrix, eval_phi, eval_psi, eval_theta,
                           linear_index, monomial_derivative, monomial_values, monomials,
                           multi_indices, psi_values, theta_values)

coords = arrays(np.float64, 3, elements=st.floats(-1.5, 1.5))


def fd(f, x, k, eps=1e-6):
    e = np.zeros_like(x)
    e[k] = eps
    return (f(x + e) - f(x - e)) / (2 * eps)


def test_cardinality_examples():
    assert cardinality(1, 3) == 4
    assert cardinality(2, 4) == 15
    assert cardinality(0, 3) == cardinality(0, 4) == 1
    assert [cardinality(N, 3) for N in range(4)] == [1, 4, 10, 20]
    assert [cardinality(N, 4) for N in range(4)] == [1, 5, 15, 35]


def test_cardinality_negative_rejected():
    with pytest.raises(ValueError):
        cardinality(-1, 3)


@pytest.mark.parametrize("N", range(4))
@pytest.mark.parametrize("d", [3, 4])
def test_index_map_is_bijection(N, d):
    idx = multi_indices(N, d)
    assert len(idx) == cardinality(N, d)
    assert len({tuple(r) for r in idx.tolist()}) == len(idx)
    assert idx.sum(axis=1).max() == N
    for e in idx.tolist():
        assert multi_indices(sum(e), d).tolist()[linear_index(e)] == e


@pytest.mark.parametrize("N", range(4))
def test_embedding_space_into_space_time(N):
    """Space-time indices with zero time exponent come first, in the spatial order."""
    i3 = multi_indices(N, 3)
    i4 = multi_indices(N, 4)
    assert np.array_equal(i4[:len(i3), :3], i3)
    assert np.all(i4[:len(i3), 3] == 0)


def test_phi_at_center_and_first_order_example():
    c = np.array([0.3, -0.2, 1.0])
    v, g = eval_phi(c, 0.5, 2, c[None])
    assert np.array_equal(v[0], np.eye(10)[0])
    v, _ = eval_phi(c, 0.5, 1, (c + [0.5, 0, 0])[None])
    assert np.allclose(v[0], [1, 1, 0, 0])


@given(coords, st.integers(0, 3), st.floats(0.2, 3.0))
def test_phi_gradient_matches_fd(x, N, h):
    c = np.array([0.1, 0.2, -0.3])
    _, g = eval_phi(c, h, N, x[None])
    f = lambda y: eval_phi(c, h, N, y[None])[0][0]
    for k in range(3):
        assert np.allclose(g[0, :, k], fd(f, x, k), atol=1e-8 * max(1.0, np.abs(g).max()))


@given(coords, st.floats(0.0, 1.0), st.integers(0, 3))
def test_theta_derivatives_match_fd(x, s, N):
    c, h, t0, dt = np.array([0.2, 0.0, -0.1]), 0.7, 1.0, 0.3
    t = t0 + s * dt
    v, vt, vx = eval_theta(c, h, t0, dt, N, x[None], t)
    ft = lambda tt: eval_theta(c, h, t0, dt, N, x[None], tt[0])[0][0]
    scale = max(1.0, np.abs(vt).max(), np.abs(vx).max())
    assert np.allclose(vt[0], fd(ft, np.array([t]), 0), atol=1e-8 * scale)
    for k in range(3):
        fx = lambda y: eval_theta(c, h, t0, dt, N, y[None], t)[0][0]
        assert np.allclose(vx[0, :, k], fd(fx, x, k), atol=1e-8 * scale)


@pytest.mark.parametrize("N", range(4))
def test_theta_at_t0_restricts_to_phi(N):
    rng = np.random.default_rng(N)
    x = rng.uniform(-1, 1, (5, 3))
    c = np.array([0.1, 0.4, -0.2])
    th, _, _ = eval_theta(c, 0.8, 2.0, 0.1, N, x, 2.0)
    ph, _ = eval_phi(c, 0.8, N, x)
    L3 = cardinality(N, 3)
    assert np.allclose(th[:, :L3], ph, atol=1e-15)
    assert np.all(th[:, L3:] == 0.0)


@given(coords, st.floats(0.0, 1.0), st.integers(0, 3))
def test_psi_time_derivative_matches_fd(x, s, N):
    c0, c1 = np.array([0.0, 0.1, 0.2]), np.array([0.3, -0.1, 0.25])
    h, t0, dt = 0.6, 0.0, 0.2
    t = t0 + s * dt
    v, vt, vx = eval_psi(c0, c1, h, t0, dt, N, x[None], t)
    f = lambda tt: eval_psi(c0, c1, h, t0, dt, N, x[None], tt[0])[0][0]
    scale = max(1.0, np.abs(vt).max())
    assert np.allclose(vt[0], fd(f, np.array([t]), 0), atol=1e-8 * scale)


def test_psi_static_center_equals_phi():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, (6, 3))
    c = np.array([0.2, 0.3, 0.1])
    v, vt, g = eval_psi(c, c, 0.5, 0.0, 0.1, 3, x, 0.04)
    pv, pg = eval_phi(c, 0.5, 3, x)
    assert np.allclose(v, pv) and np.allclose(g, pg) and np.all(vt == 0.0)


def test_psi_endpoints_are_cell_bases():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, (6, 3))
    c0, c1 = np.array([0.0, 0.0, 0.0]), np.array([0.1, -0.2, 0.05])
    assert np.allclose(eval_psi(c0, c1, 0.5, 1.0, 0.1, 2, x, 1.0)[0], eval_phi(c0, 0.5, 2, x)[0])
    assert np.allclose(eval_psi(c0, c1, 0.5, 1.0, 0.1, 2, x, 1.1)[0], eval_phi(c1, 0.5, 2, x)[0])


@given(arrays(np.float64, 4, elements=st.floats(-1.5, 1.5)), st.integers(0, 3))
def test_fast_paths_agree(z, N):
    v, g = monomials(z[None], N)
    assert np.allclose(monomial_values(z[None], N), v, rtol=1e-14, atol=1e-14)
    assert np.allclose(monomials(z[None], N, grad=False), v)
    for j in range(4):
        # derivative matrices reproduce the analytic gradient
        assert np.allclose(v @ derivative_matrix(N, 4, j), g[..., j], atol=1e-13)
        alpha = [0, 0, 0, 0]
        alpha[j] = 1
        assert np.allclose(monomial_derivative(z[None], N, alpha), g[..., j], atol=1e-13)


def test_values_only_helpers_match():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (4, 3))
    t = rng.uniform(0, 0.1, 4)
    c0, c1 = np.array([0.0, 0.1, 0.0]), np.array([0.2, 0.1, -0.1])
    assert np.allclose(theta_values(c0, 0.5, 0.0, 0.1, 2, x, t), eval_theta(c0, 0.5, 0.0, 0.1, 2, x, t)[0])
    assert np.allclose(psi_values(c0, c1, 0.5, 0.0, 0.1, 2, x, t), eval_psi(c0, c1, 0.5, 0.0, 0.1, 2, x, t)[0])
