"""Gauss rules on the unit interval, reference triangle, tetrahedron and prism.

Triangle and tetrahedron rules are collapsed (Duffy) tensor products of
Gauss-Jacobi rules, so an n-point-per-direction rule is exact up to total
degree 2n - 1.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray     # (Q, dim) reference coordinates
    weights: np.ndarray   # (Q,)

    def __len__(self):
        return len(self.weights)


def _jacobi01(n, alpha):
    """n-point Gauss rule on [0,1] for weight (1-x)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def line_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0)[:, None], 0.5 * w)


@lru_cache(maxsize=None)
def triangle_rule(n):
    """Rule on {z1, z2 >= 0, z1 + z2 <= 1}; weights sum to 1/2."""
    a, wa = _jacobi01(n, 1.0)
    b, wb = _jacobi01(n, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    z1 = A.ravel()
    z2 = (B * (1.0 - A)).ravel()
    w = np.outer(wa, wb).ravel()
    return QuadratureRule(np.stack([z1, z2], axis=1), w)


@lru_cache(maxsize=None)
def tet_rule(n):
    """Rule on the unit reference tetrahedron; weights sum to 1/6."""
    a, wa = _jacobi01(n, 2.0)
    b, wb = _jacobi01(n, 1.0)
    c, wc = _jacobi01(n, 0.0)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    x = A
    y = B * (1.0 - A)
    z = C * (1.0 - A) * (1.0 - B)
    w = np.einsum("i,j,k->ijk", wa, wb, wc)
    nodes = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    return QuadratureRule(nodes, w.ravel())


@lru_cache(maxsize=None)
def prism_rule(n_tri, n_time):
    """Triangle x [0,1] rule; nodes are (z1, z2, tau)."""
    tri = triangle_rule(n_tri)
    ln = line_rule(n_time)
    z = np.repeat(tri.nodes, len(ln), axis=0)
    tau = np.tile(ln.nodes[:, 0], len(tri))
    w = np.outer(tri.weights, ln.weights).ravel()
    return QuadratureRule(np.column_stack([z, tau]), w)


def time_points(N):
    """Number of Gauss nodes in time for degree N."""
    return max(2, N + 1)


def reference_quadrature(kind, N):
    """Rules used by the scheme for degree N.

    tet: max(8, (N+1)^3) nodes; prism: max(2, N+1) * max(4, (N+1)^2) nodes;
    prism_boosted: max(2, N+2) * max(4, (N+2)^2) nodes.
    """
    if N not in (0, 1, 2, 3):
        raise ValueError(f"unsupported degree N={N}")
    n = max(2, N + 1)
    if kind == "tet":
        return tet_rule(n)
    if kind == "prism":
        return prism_rule(n, n)
    if kind == "prism_boosted":
        m = max(2, N + 2)
        return prism_rule(m, m)
    if kind == "time":
        return line_rule(n)
    raise ValueError(f"unknown rule kind {kind!r}")


def exactness_degree(kind, N):
    """Total degree integrated exactly by reference_quadrature(kind, N)."""
    n = max(2, N + 2) if kind == "prism_boosted" else max(2, N + 1)
    return 2 * n - 1


def _monomial_matrix(pts, D):
    """Monomials of total degree <= D at pts (Q, d), centered for conditioning."""
    d = pts.shape[1]
    exps = [e for e in np.ndindex(*(D + 1,) * d) if sum(e) <= D]
    return np.stack([np.prod(pts ** np.array(e), axis=1) for e in exps], axis=1)


def _orbit(kind, a, b=None):
    """Barycentric points of a symmetry orbit in the tetrahedron."""
    from itertools import permutations
    if kind == "S4":
        base = (0.25, 0.25, 0.25, 0.25)
    elif kind == "S31":
        base = (a, a, a, 1.0 - 3.0 * a)
    elif kind == "S22":
        base = (a, a, 0.5 - a, 0.5 - a)
    else:  # S211
        base = (a, a, b, 1.0 - 2.0 * a - b)
    return np.array(sorted(set(permutations(base))))


# positive fully symmetric rules on the reference tetrahedron (volume 1/6):
# orbit kind, parameters, weight per point
_SYMMETRIC_TET = {
    2: [("S31", (0.1381966011250105,), 1.0 / 24.0)],
    5: [("S31", (0.0927352503108912,), 0.01224884051939366),
        ("S31", (0.3108859192633006,), 0.01878132095300264),
        ("S22", (0.0455037041256496,), 0.007091003462846911)],
    6: [("S31", (0.214602871259151684,), 0.00665379170969464506),
        ("S31", (0.0406739585346113397,), 0.00167953517588677620),
        ("S31", (0.322337890142275646,), 0.00922619692394239843),
        ("S211", (0.0636610018750175299, 0.269672331458315867), 0.00803571428571428248)],
}


@lru_cache(maxsize=None)
def symmetric_tet_rule(degree):
    """Smallest tabulated positive symmetric tet rule exact to at least `degree`.

    The tabulated parameters are polished by Newton's method on the moment
    equations, so the rule is exact to round-off.
    """
    key = min(k for k in _SYMMETRIC_TET if k >= degree)
    orbits = _SYMMETRIC_TET[key]
    ref = tet_rule(key // 2 + 2)

    def build(params):
        pts, ws = [], []
        i = 0
        for kind, p0, _ in orbits:
            npar = len(p0)
            pts.append(_orbit(kind, *params[i:i + npar]))
            ws.append(np.full(len(pts[-1]), params[i + npar]))
            i += npar + 1
        lam = np.concatenate(pts)
        return lam[:, 1:], np.concatenate(ws)

    x0 = np.concatenate([np.r_[p, w] for _, p, w in orbits])
    target = _monomial_matrix(ref.nodes, key).T @ ref.weights

    def resid(params):
        nodes, w = build(params)
        return _monomial_matrix(nodes, key).T @ w - target

    from scipy.optimize import least_squares
    sol = least_squares(resid, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    nodes, w = build(sol.x)
    if np.abs(resid(sol.x)).max() > 1e-15 or np.any(w <= 0):
        raise RuntimeError(f"symmetric tet rule of degree {key} failed to converge")
    return QuadratureRule(nodes, w)
