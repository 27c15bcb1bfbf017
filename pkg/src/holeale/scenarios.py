"""Initial meshes and initial conditions for the benchmark scenarios."""

import numpy as np

from .euler_physics import primitive_to_conserved
from .mesh_core import Box, GeneratorSet, Tetrahedralization, tet_volumes


def oriented(P, tets):
    """Reorder each tet so its signed volume is positive."""
    tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
    neg = tet_volumes(P, tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


# --------------------------------------------------------------------------
# single-flip cube

def sanity_generators(ys):
    """Fourteen generators on the walls of [-1, 1]^3 (0-based order)."""
    cols = np.array([
        [0, 0, 1, -1, 0, 0, -1, 1, 1, -1, -1, 1, 1, -1],
        [ys, ys, 0, 0, -1, 1, -1, -1, 1, 1, -1, -1, 1, 1],
        [-1, 1, 0, 0, 0, 0, -1, -1, -1, -1, 1, 1, 1, 1],
    ], dtype=float)
    return cols.T.copy()


def _sanity_outer_tets(P):
    """Corner and cube-edge tets around the central octahedron of face generators."""
    face_gen = {}
    for i in range(6):
        p = P[i]
        axis = int(np.argmax(np.abs(p)))
        face_gen[(axis, 1 if p[axis] > 0 else 0)] = i
    corners = list(range(6, 14))
    tets = []
    for c in corners:
        s = P[c]
        tets.append([c] + [face_gen[(ax, 1 if s[ax] > 0 else 0)] for ax in range(3)])
    for a in corners:
        for b in corners:
            if a >= b:
                continue
            diff = np.nonzero(P[a] != P[b])[0]
            if len(diff) != 1:
                continue
            ax = int(diff[0])
            others = [k for k in range(3) if k != ax]
            faces = [face_gen[(k, 1 if P[a][k] > 0 else 0)] for k in others]
            tets.append([a, b] + faces)
    return tets


SANITY_DIAMOND = {
    # 1-based generator labels of the central octahedron, before and after the flip
    "32": ([(1, 2, 3, 4), (1, 2, 4, 5), (1, 2, 5, 3), (1, 3, 4, 6), (2, 3, 4, 6)],
           [(1, 3, 4, 5), (2, 3, 4, 5), (1, 3, 4, 6), (2, 3, 4, 6)]),
    "44": ([(3, 4, 1, 5), (3, 4, 5, 2), (3, 4, 2, 6), (3, 4, 6, 1)],
           [(1, 2, 3, 5), (1, 2, 5, 4), (1, 2, 4, 6), (1, 2, 6, 3)]),
}


def sanity_meshes(flip):
    """Generators plus the tet meshes before and after the forced flip.

    flip is "32", "23" or "44".
    """
    ys = 0.0 if flip == "44" else -0.5
    P = sanity_generators(ys)
    outer = _sanity_outer_tets(P)
    key = "44" if flip == "44" else "32"
    before, after = SANITY_DIAMOND[key]
    if flip == "23":
        before, after = after, before
    t0 = oriented(P, outer + [[v - 1 for v in t] for t in before])
    t1 = oriented(P, outer + [[v - 1 for v in t] for t in after])
    box = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    gens = GeneratorSet(P, box)
    return gens, Tetrahedralization(t0, 14), Tetrahedralization(t1, 14)


# --------------------------------------------------------------------------
# structured box lattice

def kuhn_lattice(lo, hi, n):
    """Generators on an (n+1)^3 grid and the 6-tets-per-cube Kuhn tetrahedralization."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ax = [np.linspace(lo[k], hi[k], n + 1) for k in range(3)]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    vid = np.arange((n + 1) ** 3).reshape(n + 1, n + 1, n + 1)
    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corner = lambda a, b, c: vid[i + a, j + b, k + c]
    tets = []
    # paths from (0,0,0) to (1,1,1) along the six axis permutations
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        s = [0, 0, 0]
        path = [corner(*s)]
        for axis in perm:
            s[axis] = 1
            path.append(corner(*s))
        tets.append(np.stack(path, axis=1))
    tets = np.concatenate(tets, axis=0)
    box = Box(tuple(lo), tuple(hi))
    return GeneratorSet(P, box), Tetrahedralization(oriented(P, tets), len(P))


SHU_LEVELS = {1: 12, 2: 16, 3: 20, 4: 26}   # intervals per direction (even: a generator at the center)


def shu_vortex_state(x, gas, eps=5.0, center=(5.0, 5.0)):
    """Conserved variables of the stationary isentropic vortex at points x (..., 3)."""
    g = gas.gamma
    dx = x[..., 0] - center[0]
    dy = x[..., 1] - center[1]
    r2 = dx ** 2 + dy ** 2
    dT = -(g - 1.0) * eps ** 2 / (8.0 * g * np.pi ** 2) * np.exp(1.0 - r2)
    amp = eps / (2.0 * np.pi) * np.exp(0.5 * (1.0 - r2))
    rho = (1.0 + dT) ** (1.0 / (g - 1.0))
    p = (1.0 + dT) ** (g / (g - 1.0))
    vel = np.stack([-dy * amp, dx * amp, np.zeros_like(dx)], axis=-1)
    return primitive_to_conserved(rho, vel, p, gas)


def cubic_ramp(z, lo=0.0, hi=10.0, width=2.0):
    """C1 weight that is 1 on [lo + width, hi - width] and 0 at lo, hi; returns (g, g', g'', g''')."""
    z = np.asarray(z, dtype=float)
    g = np.ones_like(z)
    d1, d2, d3 = np.zeros_like(z), np.zeros_like(z), np.zeros_like(z)
    for side in (0, 1):
        s = (z - lo) / width if side == 0 else (hi - z) / width
        sign = 1.0 if side == 0 else -1.0
        m = s < 1.0
        sc = np.clip(s, 0.0, 1.0)
        g = np.where(m, 3 * sc ** 2 - 2 * sc ** 3, g)
        d1 = np.where(m, sign * (6 * sc - 6 * sc ** 2) / width, d1)
        d2 = np.where(m, (6 - 12 * sc) / width ** 2, d2)
        d3 = np.where(m, sign * (-12.0) / width ** 3, d3)
    return g, d1, d2, d3


# --------------------------------------------------------------------------
# rotating sphere

def fibonacci_sphere(n, r, phase=0.0):
    """n quasi-uniform points on the sphere of radius r about the origin."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    s = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5.0 ** 0.5) * k + phase
    return r * np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def box_surface_points(lo, hi, n, rng, jitter=0.08):
    """(n+1)^2 lattice on every face of the box, jittered inside faces and along edges."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = np.linspace(0.0, 1.0, n + 1)
    G = np.stack(np.meshgrid(u, u, u, indexing="ij"), axis=-1).reshape(-1, 3)
    on = (G == 0.0) | (G == 1.0)
    G = G[on.any(axis=1)]
    on = (G == 0.0) | (G == 1.0)
    # free coordinates (not on a wall) move by a fraction of the spacing
    G = np.where(on, G, G + jitter / n * rng.uniform(-1.0, 1.0, G.shape))
    return lo + G * (hi - lo)


def delaunay_mesh(P, box):
    """GeneratorSet and oriented Delaunay tetrahedralization of points in a box."""
    from scipy.spatial import Delaunay

    tri = Delaunay(P)
    tets = oriented(P, tri.simplices)
    vol = tet_volumes(P, tets)
    if np.any(vol <= 1e-12 * box.volume) or abs(vol.sum() - box.volume) > 1e-10 * box.volume:
        raise ValueError("degenerate Delaunay tetrahedralization")
    return GeneratorSet(P, box), Tetrahedralization(tets, len(P))


def rotating_sphere_layout(seed=0):
    """About 270 generators: rotating core shells, static shells and a box surface lattice."""
    rng = np.random.default_rng(seed)
    box = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    parts = [np.zeros((1, 3)),
             fibonacci_sphere(12, 0.12),
             fibonacci_sphere(40, 0.24, 0.3),
             fibonacci_sphere(60, 0.36, 0.7),
             fibonacci_sphere(60, 0.55, 1.1),
             box_surface_points(box.lo, box.hi, 4, rng)]
    return delaunay_mesh(np.concatenate(parts), box)


class RotatingCore:
    """Mesh velocity omega e_z x r inside radius r_core, zero outside."""

    def __init__(self, omega=np.pi, r_core=0.3):
        self.omega = float(omega)
        self.r_core = float(r_core)

    def _inside(self, p):
        return np.linalg.norm(p, axis=1) < self.r_core

    def derivatives(self, points, cells=None):
        p = np.atleast_2d(points)
        n = len(p)
        m = self._inside(p)
        v = np.zeros((n, 3))
        v[m, 0] = -self.omega * p[m, 1]
        v[m, 1] = self.omega * p[m, 0]
        J = np.zeros((n, 3, 3))
        J[m, 0, 1] = -self.omega
        J[m, 1, 0] = self.omega
        return v, J, np.zeros((n, 3, 3, 3)), np.zeros((n, 3, 3, 3, 3))

    def advance(self, points, dt):
        """Exact positions after dt (rigid rotation of the core)."""
        p = np.array(points, dtype=float, copy=True)
        m = self._inside(p)
        c, s = np.cos(self.omega * dt), np.sin(self.omega * dt)
        x, y = p[m, 0].copy(), p[m, 1].copy()
        p[m, 0] = c * x - s * y
        p[m, 1] = s * x + c * y
        return p
