"""Compressible Euler equations for an ideal gas and the ALE Rusanov flux.

States are arrays (..., 5) holding (rho, rho*u, rho*v, rho*w, rho*E).
Space-time normals are (..., 4) arrays (n_x, n_y, n_z, n_t).
"""

from dataclasses import dataclass

import numpy as np

NVAR = 5


class StateError(ValueError):
    """Raised when a state has non-positive density or pressure."""


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gamma must exceed 1")


def primitive_to_conserved(rho, vel, p, gas):
    rho = np.asarray(rho, dtype=float)
    vel = np.asarray(vel, dtype=float)
    q = np.empty(np.broadcast_shapes(rho.shape, vel.shape[:-1], np.shape(p)) + (NVAR,))
    q[..., 0] = rho
    q[..., 1:4] = rho[..., None] * vel
    q[..., 4] = p / (gas.gamma - 1.0) + 0.5 * rho * np.sum(vel * vel, axis=-1)
    return q


def pressure(q, gas, check=True):
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    kin = 0.5 * np.sum(q[..., 1:4] ** 2, axis=-1) / rho
    p = (gas.gamma - 1.0) * (q[..., 4] - kin)
    if check and (np.any(~(rho > 0)) or np.any(~(p > 0))):
        raise StateError("non-positive density or pressure")
    return p


def sound_speed(q, gas, check=True):
    return np.sqrt(gas.gamma * pressure(q, gas, check) / q[..., 0])


def flux(q, gas, check=True):
    """Physical flux tensor (..., 5, 3)."""
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    u = q[..., 1:4] / rho[..., None]
    p = pressure(q, gas, check)
    F = np.empty(q.shape + (3,))
    F[..., 0, :] = q[..., 1:4]
    F[..., 1:4, :] = q[..., 1:4, None] * u[..., None, :]
    for k in range(3):
        F[..., 1 + k, k] += p
    F[..., 4, :] = (q[..., 4] + p)[..., None] * u
    return F


def normal_flux_jacobian(q, nx, gas):
    """d(F(q) . nx)/dq as (..., 5, 5) for a (not necessarily unit) nx."""
    q = np.asarray(q, dtype=float)
    g = gas.gamma
    rho = q[..., 0]
    u = q[..., 1:4] / rho[..., None]
    E = q[..., 4] / rho
    un = np.sum(u * nx, axis=-1)
    q2 = np.sum(u * u, axis=-1)
    H = g * E - 0.5 * (g - 1.0) * q2
    A = np.zeros(q.shape + (NVAR,))
    A[..., 0, 1:4] = nx
    for i in range(3):
        A[..., 1 + i, 0] = 0.5 * (g - 1.0) * q2 * nx[..., i] - u[..., i] * un
        A[..., 1 + i, 1:4] = u[..., i, None] * nx - (g - 1.0) * nx[..., i, None] * u
        A[..., 1 + i, 1 + i] += un
        A[..., 1 + i, 4] = (g - 1.0) * nx[..., i]
    A[..., 4, 0] = un * ((g - 1.0) * q2 - g * E)
    A[..., 4, 1:4] = H[..., None] * nx - (g - 1.0) * un[..., None] * u
    A[..., 4, 4] = g * un
    return A


def max_signal(q, gas, n):
    """Euler spectral radius |u.n| + c along a unit direction n."""
    q = np.asarray(q, dtype=float)
    u = q[..., 1:4] / q[..., :1]
    return np.abs(np.sum(u * n, axis=-1)) + sound_speed(q, gas)


def ale_signal(q, nst, gas, check=True):
    """Spectral radius of dF/dq . n_x + n_t I: |u.n_x + n_t| + c |n_x|."""
    u = q[..., 1:4] / q[..., :1]
    nx = nst[..., :3]
    a = np.sum(u * nx, axis=-1) + nst[..., 3]
    return np.abs(a) + sound_speed(q, gas, check) * np.linalg.norm(nx, axis=-1)


def ale_signal_grad(q, nst, gas):
    """Gradient of ale_signal with respect to q: (..., 5)."""
    g = gas.gamma
    rho = q[..., 0]
    u = q[..., 1:4] / rho[..., None]
    nx = nst[..., :3]
    a = np.sum(u * nx, axis=-1) + nst[..., 3]
    sgn = np.sign(a)
    p = pressure(q, gas, check=False)
    c = np.sqrt(g * p / rho)
    nn = np.linalg.norm(nx, axis=-1)
    q2 = np.sum(u * u, axis=-1)
    # derivatives of u.n_x
    da = np.zeros(q.shape)
    da[..., 0] = -np.sum(u * nx, axis=-1) / rho
    da[..., 1:4] = nx / rho[..., None]
    # dp/dq
    dp = np.zeros(q.shape)
    dp[..., 0] = 0.5 * (g - 1.0) * q2
    dp[..., 1:4] = -(g - 1.0) * u
    dp[..., 4] = g - 1.0
    # c = sqrt(g p / rho)
    dc = 0.5 * g / (c * rho)[..., None] * dp
    dc[..., 0] -= 0.5 * c / rho
    return sgn[..., None] * da + (nn[..., None]) * dc


def softmax(a, b, sharpness=50.0):
    """Smooth surrogate of max(a, b) with sharpness sharpness / max(a, b)."""
    m = np.maximum(np.maximum(a, b), 1e-300)
    sigma = sharpness / m
    wa = 0.5 * (1.0 + np.tanh(0.5 * sigma * (a - b)))
    return wa * a + (1.0 - wa) * b


def softmax_grad(a, b, sharpness=50.0):
    """Partial derivatives (d/da, d/db) of softmax."""
    m = np.maximum(np.maximum(a, b), 1e-300)
    sigma = sharpness / m
    wa = 0.5 * (1.0 + np.tanh(0.5 * sigma * (a - b)))
    dw = wa * (1.0 - wa)
    diff = a - b
    # sigma depends on the larger argument
    dsig = -sharpness / m ** 2
    a_is_max = a >= b
    dfa = wa + diff * dw * sigma + diff * dw * diff * np.where(a_is_max, dsig, 0.0)
    dfb = (1.0 - wa) - diff * dw * sigma + diff * dw * diff * np.where(a_is_max, 0.0, dsig)
    return dfa, dfb


def rusanov_ale(qL, qR, nst, gas, smooth=False, sharpness=50.0):
    """ALE Rusanov flux across a space-time surface with unit normal nst.

    0.5 (F_L + F_R) . n_x + 0.5 (q_L + q_R) n_t - 0.5 s_max (q_R - q_L).
    """
    qL = np.asarray(qL, dtype=float)
    qR = np.asarray(qR, dtype=float)
    nst = np.asarray(nst, dtype=float)
    if np.any(np.linalg.norm(nst[..., :3], axis=-1) == 0.0):
        raise ValueError("space-time normal has no spatial component")
    return rusanov_raw(qL, qR, nst, gas, smooth, sharpness)


def rusanov_raw(qL, qR, nst, gas, smooth=False, sharpness=50.0):
    """Rusanov flux for any (possibly unnormalized or zero) normal.

    The flux is 1-homogeneous in nst, so a scaled normal gives a scaled flux.
    """
    nx = nst[..., :3]
    FL = np.einsum("...vk,...k->...v", flux(qL, gas), nx)
    FR = np.einsum("...vk,...k->...v", flux(qR, gas), nx)
    sL = ale_signal(qL, nst, gas)
    sR = ale_signal(qR, nst, gas)
    s = softmax(sL, sR, sharpness) if smooth else np.maximum(sL, sR)
    nt = nst[..., 3:4]
    return 0.5 * (FL + FR) + 0.5 * (qL + qR) * nt - 0.5 * s[..., None] * (qR - qL)


def rusanov_ale_dqL(qL, qR, nst, gas, sharpness=50.0):
    """Jacobian of the soft-max Rusanov flux with respect to qL: (..., 5, 5)."""
    nx = nst[..., :3]
    nt = nst[..., 3]
    A = normal_flux_jacobian(qL, nx, gas)
    sL = ale_signal(qL, nst, gas, check=False)
    sR = ale_signal(qR, nst, gas, check=False)
    s = softmax(sL, sR, sharpness)
    dfa, _ = softmax_grad(sL, sR, sharpness)
    dsL = ale_signal_grad(qL, nst, gas)
    J = 0.5 * A
    eye = np.eye(NVAR)
    J = J + (0.5 * nt + 0.5 * s)[..., None, None] * eye
    J = J - 0.5 * (qR - qL)[..., :, None] * (dfa[..., None] * dsL)[..., None, :]
    return J
