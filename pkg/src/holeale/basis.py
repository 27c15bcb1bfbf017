"""Modal Taylor-monomial bases on cells, space-time volumes and moving cells.

Multi-indices are ordered co-lexicographically: sorted by the last exponent
first, then the one before it, and so on.  With this order the spatial block
of a space-time basis (last exponent zero) is exactly the spatial basis, so
coefficient vectors embed without reindexing.
"""

from functools import lru_cache
from math import factorial

import numpy as np


def cardinality(N, d):
    """Number of monomials of total degree <= N in d variables."""
    if N < 0:
        raise ValueError("degree must be non-negative")
    num = 1
    for k in range(1, d + 1):
        num *= N + k
    return num // factorial(d)


@lru_cache(maxsize=None)
def _multi_indices(N, d):
    idx = []

    def rec(prefix, left):
        if len(prefix) == d:
            idx.append(tuple(prefix))
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k)

    rec([], N)
    idx.sort(key=lambda m: tuple(reversed(m)))
    out = np.array(idx, dtype=np.int64).reshape(-1, d)
    out.setflags(write=False)
    return out


def multi_indices(N, d):
    """(L, d) array of exponents in basis order."""
    return _multi_indices(int(N), int(d))


def linear_index(ell):
    """Position of multi-index `ell` in the basis of its own length and any degree >= |ell|."""
    ell = tuple(int(v) for v in ell)
    table = multi_indices(sum(ell), len(ell))
    hits = np.nonzero((table == np.array(ell)).all(axis=1))[0]
    return int(hits[0])


def monomials(z, N, d=None, grad=True):
    """Monomials z^ell and their first derivatives.

    z : (..., d) scaled coordinates.
    Returns values (..., L) and derivatives (..., L, d); only the values
    when grad is False.
    """
    z = np.asarray(z, dtype=float)
    d = z.shape[-1] if d is None else d
    idx = multi_indices(N, d)
    # per-direction factors z_k^ell_k and their derivatives, each (..., L)
    fac, dfac = [], []
    for k in range(d):
        zk = z[..., k:k + 1]
        pw = [np.ones_like(zk)]
        for m in range(1, N + 1):
            pw.append(pw[-1] * zk)
        pw = np.concatenate(pw, axis=-1)
        dpw = np.concatenate([np.zeros_like(zk), pw[..., :-1] * np.arange(1, N + 1)], axis=-1)
        fac.append(pw[..., idx[:, k]])
        if grad:
            dfac.append(dpw[..., idx[:, k]])
    if not grad:
        out = fac[0]
        for f in fac[1:]:
            out = out * f
        return out
    # prefix and suffix products give the gradient without division
    pre = [np.ones_like(fac[0])]
    for k in range(d - 1):
        pre.append(pre[-1] * fac[k])
    suf = np.ones_like(fac[0])
    grads = np.empty(fac[0].shape + (d,))
    for k in range(d - 1, -1, -1):
        grads[..., k] = dfac[k] * pre[k] * suf
        suf = suf * fac[k]
    return suf, grads


@lru_cache(maxsize=None)
def _derivative_matrix(N, d, j):
    idx = multi_indices(N, d)
    pos = {tuple(e): k for k, e in enumerate(idx.tolist())}
    D = np.zeros((len(idx), len(idx)))
    for l, e in enumerate(idx.tolist()):
        if e[j] > 0:
            m = list(e)
            m[j] -= 1
            D[pos[tuple(m)], l] = e[j]
    D.setflags(write=False)
    return D


def derivative_matrix(N, d, j):
    """Matrix D with d/dz_j z^ell = sum_m z^m D[m, ell] in the basis order."""
    return _derivative_matrix(int(N), int(d), int(j))


@lru_cache(maxsize=None)
def _parents(N, d):
    """For every multi-index after the first: (parent index, direction) with ell = parent + e_dir."""
    idx = multi_indices(N, d)
    pos = {tuple(e): k for k, e in enumerate(idx.tolist())}
    out = []
    for e in idx.tolist()[1:]:
        j = next(k for k in range(d) if e[k] > 0)
        m = list(e)
        m[j] -= 1
        out.append((pos[tuple(m)], j))
    return tuple(out)


def monomial_values(z, N):
    """Values of all monomials at z (..., d) as a (..., L) view.

    Each monomial is one product of an earlier monomial and a coordinate;
    the result is stored monomial-major, so the returned array is a
    transposed view (matmul handles it without copying).
    """
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    par = _parents(int(N), d)
    zt = np.moveaxis(z, -1, 0)
    out = np.empty((len(par) + 1,) + z.shape[:-1])
    out[0] = 1.0
    for l, (m, j) in enumerate(par, start=1):
        np.multiply(out[m], zt[j], out=out[l])
    return np.moveaxis(out, 0, -1)


def monomial_derivative(z, N, alpha):
    """Mixed derivative d^alpha of all monomials at scaled points z: (..., L)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    idx = multi_indices(N, d)
    out = np.ones(z.shape[:-1] + (len(idx),))
    for k in range(d):
        a = int(alpha[k])
        n = idx[:, k]
        coef = np.array([factorial(m) / factorial(m - a) if m >= a else 0.0 for m in n])
        out *= coef * z[..., k:k + 1] ** np.maximum(n - a, 0)
    return out


def eval_phi(center, h, N, x):
    """Spatial basis of a cell: values (P, L3) and gradients (P, L3, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v, g = monomials((x - center) / h, N, 3)
    return v, g / np.asarray(h, dtype=float)[..., None]


def eval_theta(center, h, t0, dt, N, x, t):
    """Space-time basis of a volume.

    Returns values (P, L4), time derivative (P, L4) and spatial gradient (P, L4, 3).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    z = np.concatenate([(x - center) / h, ((t - t0) / dt)[..., None]], axis=-1)
    v, g = monomials(z, N, 4)
    h = np.asarray(h, dtype=float)
    return v, g[..., 3] / dt, g[..., :3] / h[..., None]


def eval_psi(c0, c1, h, t0, dt, N, x, t):
    """Moving spatial basis whose center slides linearly from c0 to c1.

    Returns values (P, L3), time derivative (P, L3) and spatial gradient (P, L3, 3).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    s = ((t - t0) / dt)[..., None]
    c0 = np.asarray(c0, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    center = (1.0 - s) * c0 + s * c1
    v, g = monomials((x - center) / h, N, 3)
    grad = g / np.asarray(h, dtype=float)[..., None]
    vel = (c1 - c0) / dt
    dtv = -np.einsum("...lk,...k->...l", grad, np.broadcast_to(vel, x.shape))
    return v, dtv, grad


def theta_values(center, h, t0, dt, N, x, t):
    """Values only of the space-time basis (see eval_theta)."""
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    z = np.concatenate([(x - center) / h, ((t - t0) / dt)[..., None]], axis=-1)
    return monomial_values(z, N)


def psi_values(c0, c1, h, t0, dt, N, x, t):
    """Values only of the moving spatial basis (see eval_psi)."""
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    s = ((t - t0) / dt)[..., None]
    c0 = np.asarray(c0, dtype=float)
    return monomial_values((x - (c0 + s * (np.asarray(c1, dtype=float) - c0))) / h, N)
