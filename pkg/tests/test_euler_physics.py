import numpy as np
import pytest
from hypothesis import given, strategies as st

from holeale.euler_physics import (GasModel, StateError, ale_signal, ale_signal_grad, flux,
                                   max_signal, normal_flux_jacobian, pressure,
                                   primitive_to_conserved, rusanov_ale, rusanov_ale_dqL,
                                   rusanov_raw, softmax, softmax_grad, sound_speed)
from holeale.scenarios import shu_vortex_state

GAS = GasModel(1.4)


def random_states(rng, n):
    rho = rng.uniform(0.2, 3.0, n)
    vel = rng.uniform(-2.0, 2.0, (n, 3))
    p = rng.uniform(0.2, 3.0, n)
    return primitive_to_conserved(rho, vel, p, GAS)


def random_normals(rng, n):
    nst = rng.normal(size=(n, 4))
    nst /= np.linalg.norm(nst, axis=1, keepdims=True)
    return nst


def test_gas_requires_gamma_above_one():
    with pytest.raises(ValueError):
        GasModel(1.0)


def test_eos_example():
    q = np.array([1.0, 0.0, 0.0, 0.0, 1.0 / 0.4])
    assert pressure(q, GAS) == pytest.approx(1.0, abs=1e-15)
    assert sound_speed(q, GAS) == pytest.approx(1.18322, abs=1e-5)


@given(st.floats(0.1, 5), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5))
def test_pressure_ignores_kinetic_energy(rho, u, v, w, p):
    q = primitive_to_conserved(np.array(rho), np.array([u, v, w]), p, GAS)
    assert pressure(q, GAS) == pytest.approx(p, rel=1e-12)


def test_shu_center_pressure():
    eps, g = 5.0, 1.4
    dT = -(g - 1) * eps ** 2 * np.e / (8 * g * np.pi ** 2)
    q = shu_vortex_state(np.array([5.0, 5.0, 3.0]), GAS)
    assert pressure(q, GAS) == pytest.approx((1 + dT) ** (g / (g - 1)), rel=1e-13)
    assert q[0] == pytest.approx((1 + dT) ** (1 / (g - 1)), rel=1e-13)


def test_invalid_states_raise():
    with pytest.raises(StateError):
        pressure(np.array([1.0, 0.0, 0.0, 0.0, -1.0]), GAS)
    with pytest.raises(StateError):
        pressure(np.array([-1.0, 0.0, 0.0, 0.0, 1.0]), GAS)


def test_static_flux_is_pressure_only():
    q = np.array([1.3, 0.0, 0.0, 0.0, 1.0 / 0.4])
    assert np.allclose(flux(q, GAS)[:, 0], [0, 1, 0, 0, 0])


def test_max_signal_example():
    q = primitive_to_conserved(np.array(1.0), np.array([1.0, 0, 0]), 1.0, GAS)
    assert max_signal(q, GAS, np.array([1.0, 0, 0])) == pytest.approx(1 + np.sqrt(1.4))


@given(st.integers(0, 10_000))
def test_max_signal_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    q = random_states(rng, 1)[0]
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    qr = q.copy()
    qr[1:4] = R @ q[1:4]
    assert max_signal(qr, GAS, R @ n) == pytest.approx(max_signal(q, GAS, n), rel=1e-12)


def classical_rusanov(qL, qR, n):
    """Textbook local Lax-Friedrichs flux for a unit spatial normal."""
    def phys(q):
        rho = q[0]
        u = q[1:4] / rho
        p = 0.4 * (q[4] - 0.5 * rho * u @ u)
        un = u @ n
        return np.r_[rho * un, q[1:4] * un + p * n, (q[4] + p) * un], abs(un) + np.sqrt(1.4 * p / rho)
    fL, sL = phys(qL)
    fR, sR = phys(qR)
    return 0.5 * (fL + fR) - 0.5 * max(sL, sR) * (qR - qL)


def test_static_normal_matches_classical_rusanov():
    qL = primitive_to_conserved(np.array(1.0), np.zeros(3), 1.0, GAS)
    qR = primitive_to_conserved(np.array(0.125), np.zeros(3), 0.1, GAS)
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        nst = np.r_[n, 0.0]
        assert np.allclose(rusanov_ale(qL, qR, nst, GAS), classical_rusanov(qL, qR, n), atol=1e-14)
    a, b = random_states(rng, 2)
    n = np.array([0.0, 0.6, 0.8])
    assert np.allclose(rusanov_ale(a, b, np.r_[n, 0.0], GAS), classical_rusanov(a, b, n), atol=1e-13)


def test_rusanov_identities_on_1000_pairs():
    rng = np.random.default_rng(42)
    qL, qR = random_states(rng, 1000), random_states(rng, 1000)
    nst = random_normals(rng, 1000)
    F = rusanov_ale(qL, qR, nst, GAS)
    # antisymmetry under normal reversal
    assert np.abs(F + rusanov_ale(qR, qL, -nst, GAS)).max() <= 1e-12 * max(1.0, np.abs(F).max())
    # consistency
    cons = np.einsum("nvk,nk->nv", flux(qL, GAS), nst[:, :3]) + qL * nst[:, 3:]
    assert np.abs(rusanov_ale(qL, qL, nst, GAS) - cons).max() <= 1e-12 * max(1.0, np.abs(cons).max())


def test_rusanov_rejects_time_only_normal():
    q = random_states(np.random.default_rng(1), 1)[0]
    with pytest.raises(ValueError):
        rusanov_ale(q, q, np.array([0.0, 0.0, 0.0, 1.0]), GAS)


@given(st.integers(0, 10_000))
def test_dissipation_bounds_moving_frame_signals(seed):
    rng = np.random.default_rng(seed)
    qL, qR = random_states(rng, 2)
    nst = random_normals(rng, 1)[0]
    nx = nst[:3]
    vn = -nst[3] / np.linalg.norm(nx)
    for q in (qL, qR):
        u = q[1:4] / q[0]
        lam = (abs(u @ nx / np.linalg.norm(nx) - vn) + sound_speed(q, GAS)) * np.linalg.norm(nx)
        assert max(ale_signal(qL, nst, GAS), ale_signal(qR, nst, GAS)) >= lam - 1e-12


@given(st.integers(0, 10_000))
def test_flux_is_one_homogeneous_in_normal(seed):
    rng = np.random.default_rng(seed)
    qL, qR = random_states(rng, 2)
    nst = random_normals(rng, 1)[0]
    s = rng.uniform(0.1, 10)
    assert np.allclose(rusanov_raw(qL, qR, s * nst, GAS), s * rusanov_raw(qL, qR, nst, GAS),
                       rtol=1e-12, atol=1e-12)


def test_normal_flux_jacobian_matches_fd():
    rng = np.random.default_rng(5)
    q = random_states(rng, 1)[0]
    nx = rng.normal(size=3)
    A = normal_flux_jacobian(q, nx, GAS)
    f = lambda y: flux(y, GAS) @ nx
    for k in range(5):
        e = np.zeros(5)
        e[k] = 1e-6
        assert np.allclose(A[:, k], (f(q + e) - f(q - e)) / 2e-6, atol=1e-6)


def test_softmax_limits_and_gradient():
    assert softmax(1.0, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert softmax(2.0, 2.0) == pytest.approx(2.0)
    assert softmax(1.0, 0.99, sharpness=1e6) == pytest.approx(1.0, abs=1e-12)
    a, b, h = 1.0, 0.97, 1e-7
    da, db = softmax_grad(a, b)
    assert da == pytest.approx((softmax(a + h, b) - softmax(a - h, b)) / (2 * h), rel=1e-6)
    assert db == pytest.approx((softmax(a, b + h) - softmax(a, b - h)) / (2 * h), rel=1e-6)


def test_signal_gradient_and_flux_jacobian_match_fd():
    rng = np.random.default_rng(9)
    qL, qR = random_states(rng, 2)
    nst = random_normals(rng, 1)[0]
    g = ale_signal_grad(qL, nst, GAS)
    J = rusanov_ale_dqL(qL, qR, nst, GAS)
    for k in range(5):
        e = np.zeros(5)
        e[k] = 1e-6
        fd_s = (ale_signal(qL + e, nst, GAS) - ale_signal(qL - e, nst, GAS)) / 2e-6
        assert g[k] == pytest.approx(fd_s, rel=1e-5, abs=1e-7)
        fd_f = (rusanov_raw(qL + e, qR, nst, GAS, smooth=True)
                - rusanov_raw(qL - e, qR, nst, GAS, smooth=True)) / 2e-6
        assert np.allclose(J[:, k], fd_f, rtol=1e-5, atol=1e-6)
