"""Generator motion and incremental tetrahedralization repair.

A step moves every generator along its high order trajectory, blends it
towards a smoothed position, then changes the connectivity by at most one
elementary flip per generator, chosen by an edge-removal search driven by a
Delaunay/sliver quality measure.
"""

import csv
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .basis import monomial_derivative
from .flips import apply_flips, event_from_tets
from .mesh_core import star_region, tet_volumes

Q_MAX = 100.0
COS_BETA_MIN = -0.7
KAPPA = 1.0 / 200.0


# --------------------------------------------------------------------------
# velocity fields and trajectories

def _derivative_orders(order):
    """Multi-indices in 3D of total order 0..order."""
    out = []
    for n in range(order + 1):
        for a in range(n + 1):
            for b in range(n + 1 - a):
                out.append((a, b, n - a - b))
    return out


class LinearVelocity:
    """v(x) = A x + b."""

    def __init__(self, A, b=(0.0, 0.0, 0.0)):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def derivatives(self, points, cells=None):
        p = np.atleast_2d(points)
        n = len(p)
        v = p @ self.A.T + self.b
        J = np.broadcast_to(self.A, (n, 3, 3)).copy()
        return v, J, np.zeros((n, 3, 3, 3)), np.zeros((n, 3, 3, 3, 3))


class PolynomialVelocity:
    """Velocity m / rho recovered from per-cell modal coefficients.

    coeffs (NP, L3, 5), centers (NP, 3), scales (NP,).  Derivatives of order
    above the polynomial degree are dropped.
    """

    def __init__(self, coeffs, centers, scales, N):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        self.scales = np.asarray(scales, dtype=float)
        self.N = int(N)

    def derivatives(self, points, cells):
        p = np.atleast_2d(points)
        cells = np.asarray(cells)
        z = (p - self.centers[cells]) / self.scales[cells, None]
        h = self.scales[cells]
        u = self.coeffs[cells]            # (P, L, 5)
        order = min(self.N, 3)
        alphas = _derivative_orders(order)
        Dq = {}
        for al in alphas:
            basis = monomial_derivative(z, self.N, al) / h[:, None] ** sum(al)
            Dq[al] = np.einsum("pl,plv->pv", basis, u)
        # Leibniz: d^a m = sum_b C(a,b) d^(a-b) v d^b rho
        Dv = {}
        rho = Dq[(0, 0, 0)][:, 0]
        for al in alphas:
            acc = Dq[al][:, 1:4].copy()
            for be in alphas:
                if be == (0, 0, 0) or any(be[k] > al[k] for k in range(3)):
                    continue
                rest = tuple(al[k] - be[k] for k in range(3))
                c = comb(al[0], be[0]) * comb(al[1], be[1]) * comb(al[2], be[2])
                acc -= c * Dv[rest] * Dq[be][:, :1]
            Dv[al] = acc / rho[:, None]
        return _assemble(Dv, len(p), order)



class DampedVelocity:
    """Velocity field multiplied by a weight g(z) (derivatives by the product rule)."""

    def __init__(self, base, weight):
        self.base = base
        self.weight = weight

    def derivatives(self, points, cells=None):
        v, J, H, T = self.base.derivatives(points, cells)
        p = np.atleast_2d(points)
        g, g1, g2, g3 = self.weight(p[:, 2])
        # derivatives of g only along z (index 2)
        Jn = g[:, None, None] * J
        Jn[:, :, 2] += g1[:, None] * v
        Hn = g[:, None, None, None] * H
        Hn[:, :, 2, :] += g1[:, None, None] * J
        Hn[:, :, :, 2] += g1[:, None, None] * J
        Hn[:, :, 2, 2] += g2[:, None] * v
        Tn = g[:, None, None, None, None] * T
        for a in range(3):
            idx = [slice(None)] * 5
            idx[2 + a] = 2
            # one derivative on g, two on v
            Tn[tuple(idx)] += g1[:, None, None, None] * H
        for a, b in ((0, 1), (0, 2), (1, 2)):
            idx = [slice(None)] * 5
            idx[2 + a] = 2
            idx[2 + b] = 2
            Tn[tuple(idx)] += g2[:, None, None] * J
        Tn[:, :, 2, 2, 2] += g3[:, None] * v
        return v * g[:, None], Jn, Hn, Tn

def _unit(*axes):
    a = [0, 0, 0]
    for k in axes:
        a[k] += 1
    return tuple(a)


def _assemble(Dv, n, order):
    v = Dv[(0, 0, 0)]
    J = np.zeros((n, 3, 3))
    H = np.zeros((n, 3, 3, 3))
    T = np.zeros((n, 3, 3, 3, 3))
    for j in range(3):
        if order >= 1:
            J[:, :, j] = Dv[_unit(j)]
        for k in range(3):
            if order >= 2:
                H[:, :, j, k] = Dv[_unit(j, k)]
            for l in range(3):
                if order >= 3:
                    T[:, :, j, k, l] = Dv[_unit(j, k, l)]
    return v, J, H, T


def trajectory_derivatives(v, J, H, T):
    """Time derivatives 1..4 of x' = v(x) for a stationary field."""
    Jv = np.einsum("pij,pj->pi", J, v)
    Hvv = np.einsum("pijk,pj,pk->pi", H, v, v)
    d2 = Jv
    d3 = Hvv + np.einsum("pij,pj->pi", J, Jv)
    d4 = (np.einsum("pijkl,pj,pk,pl->pi", T, v, v, v)
          + 3.0 * np.einsum("pijk,pj,pk->pi", H, v, Jv)
          + np.einsum("pij,pj->pi", J, Hvv)
          + np.einsum("pij,pj->pi", J, np.einsum("pij,pj->pi", J, Jv)))
    return v, d2, d3, d4


def taylor_advance(p, field, dt, cells=None):
    """Fourth order Taylor step of the trajectory through p."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    d1, d2, d3, d4 = trajectory_derivatives(*field.derivatives(P, cells))
    out = P + dt * d1 + dt ** 2 / 2.0 * d2 + dt ** 3 / 6.0 * d3 + dt ** 4 / 24.0 * d4
    return out[0] if single else out


# --------------------------------------------------------------------------
# smoothing and blending

def tet_quality(X):
    """Shape measure of tets X (..., 4, 3): 1 for a regular tet, larger otherwise."""
    X = np.asarray(X, dtype=float)
    s = 0.0
    for a, b in combinations(range(4), 2):
        s = s + np.sum((X[..., a, :] - X[..., b, :]) ** 2, axis=-1)
    vol = np.einsum("...i,...i->...", X[..., 1, :] - X[..., 0, :],
                    np.cross(X[..., 2, :] - X[..., 0, :], X[..., 3, :] - X[..., 0, :])) / 6.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.sqrt(3.0) / 216.0 * s ** 1.5 / np.abs(vol)
    return np.where(np.abs(vol) > 0, q, Q_MAX)


def _optimal_points(X):
    """Per tet and vertex slot, the apex position making the tet regular: (NT, 4, 3)."""
    out = np.empty_like(X)
    for k in range(4):
        others = [m for m in range(4) if m != k]
        F = X[:, others]
        cen = F.mean(axis=1)
        n = np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        edge = (np.linalg.norm(F[:, 1] - F[:, 0], axis=1) + np.linalg.norm(F[:, 2] - F[:, 1], axis=1)
                + np.linalg.norm(F[:, 0] - F[:, 2], axis=1)) / 3.0
        cand = cen + np.sqrt(2.0 / 3.0) * edge[:, None] * n
        Y = X.copy()
        Y[:, k] = cand
        sgn = np.sign(np.einsum("ij,ij->i", Y[:, 1] - Y[:, 0],
                                np.cross(Y[:, 2] - Y[:, 0], Y[:, 3] - Y[:, 0])))
        # keep the orientation of a positive tet
        out[:, k] = np.where((sgn >= 0)[:, None], cand, cen - np.sqrt(2.0 / 3.0) * edge[:, None] * n)
    return out


def smoothed_positions(mesh, hat, q_max=Q_MAX):
    """Quality-weighted average of per-tet optimal positions for every generator.

    Returns (positions (NP, 3), number of inverted tets seen).
    """
    hat = np.asarray(hat, dtype=float)
    X = hat[mesh.tets]
    opt = _optimal_points(X)
    q = tet_quality(X)
    vol = tet_volumes(hat, mesh.tets)
    w = np.maximum(np.where(vol > 0, q, q_max), q_max)
    NP = len(hat)
    idx = mesh.tets.ravel()
    ww = np.repeat(w, 4)
    den = np.bincount(idx, weights=ww, minlength=NP)
    out = np.empty((NP, 3))
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=ww * opt[:, :, c].ravel(), minlength=NP)
    out = np.where(den[:, None] > 0, out / np.where(den > 0, den, 1.0)[:, None], hat)
    return out, int(np.sum(vol <= 0))


def smooth_position(i, mesh, hat_positions, q_max=Q_MAX):
    """Smoothed candidate position of generator i (hat_positions: GeneratorSet or array)."""
    P = getattr(hat_positions, "positions", hat_positions)
    ball = mesh.ball(i)
    X = P[mesh.tets[ball]]
    opt = _optimal_points(X)
    slot = np.argmax(mesh.tets[ball] == i, axis=1)
    pts = opt[np.arange(len(ball)), slot]
    vol = tet_volumes(P, mesh.tets[ball])
    w = np.maximum(np.where(vol > 0, tet_quality(X), q_max), q_max)
    star = (w[:, None] * pts).sum(axis=0) / w.sum()
    box = getattr(hat_positions, "box", None)
    if box is not None:
        star = box.project(star[None], hat_positions.flags[i:i + 1])[0]
    return star


def blend(hat, star, mu):
    if not 0.0 <= mu <= 1.0:
        raise ValueError("blending factor must lie in [0, 1]")
    hat = np.asarray(hat, dtype=float)
    if mu == 0.0:
        return hat.copy()
    return (1.0 - mu) * hat + mu * np.asarray(star, dtype=float)


def compute_mu(U_star, dt, h_min, kappa=KAPPA):
    if min(U_star, dt, h_min, kappa) <= 0:
        raise ValueError("arguments must be positive")
    return float(min(1.0, np.sqrt(U_star * dt * kappa / h_min)))


# --------------------------------------------------------------------------
# quality of tets for the flip search

def circumspheres(X, cond_max=1e12):
    """Circumcenters (n, 3), radii (n,) and a validity mask of tets X (n, 4, 3)."""
    A = X[:, 1:] - X[:, :1]
    rhs = 0.5 * np.sum(A * A, axis=2)
    ok = np.linalg.cond(A) < cond_max
    sol = np.zeros((len(X), 3))
    if np.any(ok):
        sol[ok] = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
    return X[:, 0] + sol, np.linalg.norm(sol, axis=1), ok


def max_dihedral_cos(X):
    """Cosine of the largest dihedral angle of tets X (n, 4, 3)."""
    normals = []
    for k in range(4):
        f = [m for m in range(4) if m != k]
        n = np.cross(X[:, f[1]] - X[:, f[0]], X[:, f[2]] - X[:, f[0]])
        # orient away from the opposite vertex
        s = np.sign(np.einsum("ij,ij->i", n, X[:, f[0]] - X[:, k]))
        n = n * s[:, None]
        normals.append(n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300))
    cmin = np.full(len(X), 1.0)
    for a, b in combinations(range(4), 2):
        cmin = np.minimum(cmin, -np.einsum("ij,ij->i", normals[a], normals[b]))
    return cmin


def vertex_neighbors(mesh):
    """CSR (ptr, idx) of generators sharing an edge with each generator."""
    mesh._build()
    E = mesh.edges
    both = np.concatenate([E, E[:, ::-1]])
    order = np.argsort(both[:, 0], kind="stable")
    cnt = np.bincount(both[:, 0], minlength=mesh.NP)
    return np.concatenate([[0], np.cumsum(cnt)]), both[order, 1]


def tet_alpha_batch(tets, P, nbr_csr):
    """Quality alpha in [0, 1] of tets (n, 4) at positions P."""
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    X = P[tets]
    c, r, ok = circumspheres(X)
    alpha = np.ones(len(tets))
    ptr, idx = nbr_csr
    # candidate points: generators adjacent to any vertex of the tet
    slot = tets.ravel()
    counts = ptr[slot + 1] - ptr[slot]
    owner = np.repeat(np.repeat(np.arange(len(tets)), 4), counts)
    starts = np.repeat(ptr[slot], counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cand = idx[starts + offs]
    own = (tets[owner] == cand[:, None]).any(axis=1)
    owner, cand = owner[~own], cand[~own]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.linalg.norm(P[cand] - c[owner], axis=1) / r[owner]
    np.minimum.at(alpha, owner, np.where(np.isfinite(ratio), ratio, 0.0))
    dih = (1.0 + max_dihedral_cos(X)) / (1.0 + COS_BETA_MIN)
    alpha = np.minimum(alpha, dih)
    alpha[~ok | (r <= 0)] = 0.0
    return np.clip(alpha, 0.0, 1.0)


def tet_alpha(tet, coords, mesh=None, extra_points=None):
    """Quality of one tet; neighborhood from `mesh` (or `extra_points` indices)."""
    P = getattr(coords, "positions", coords)
    tet = np.asarray(tet, dtype=np.int64)
    if mesh is not None:
        csr = vertex_neighbors(mesh)
        return float(tet_alpha_batch(tet[None], P, csr)[0])
    pts = np.arange(len(P)) if extra_points is None else np.asarray(extra_points)
    ptr = np.zeros(len(P) + 1, dtype=np.int64)
    ptr[tet[0] + 1:] = len(pts)
    return float(tet_alpha_batch(tet[None], P, (ptr, pts))[0])


# --------------------------------------------------------------------------
# edge-removal planning

@dataclass
class EdgeRemovalPlan:
    edge: tuple
    ring: tuple                 # cyclic ring of the star at planning time
    removals: tuple             # ring vertices removed by successive 2-3 flips
    quality: float
    cursor: int = 0

    @property
    def flips(self):
        return len(self.removals) + 1


def _ring_of(mesh, edge):
    order, closed = star_region(mesh, edge)
    if not closed:
        return None, order
    a, b = edge
    T = mesh.tets
    ring = []
    for t0, t1 in zip(order, order[1:] + order[:1]):
        shared = (set(T[t0].tolist()) & set(T[t1].tolist())) - {a, b}
        ring.append(int(next(iter(shared))))
    return tuple(ring), order


class _Quality:
    """Cached alpha of (possibly hypothetical) tets at fixed positions."""

    def __init__(self, P, csr):
        self.P = P
        self.csr = csr
        self.cache = {}
        self._rows = {}

    def row(self, v):
        r = self._rows.get(v)
        if r is None:
            r = self._rows[v] = tuple(self.P[v].tolist())
        return r

    def signed(self, t):
        """Six times the signed volume of tet t (plain float arithmetic)."""
        p0, p1, p2, p3 = (self.row(v) for v in t)
        ax, ay, az = p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]
        bx, by, bz = p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]
        cx, cy, cz = p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]
        return ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)

    def positive(self, t):
        return self.signed(t) > 0

    def oriented(self, t):
        t = list(t)
        if not self.positive(t):
            t[1], t[2] = t[2], t[1]
        return tuple(t)

    def prefill(self, tets):
        """Compute the alphas of many tets in one batch."""
        keys = list({tuple(sorted(t)) for t in tets} - self.cache.keys())
        if keys:
            vals = tet_alpha_batch(np.array([self.oriented(k) for k in keys]), self.P, self.csr)
            self.cache.update(zip(keys, vals.tolist()))

    def alpha(self, t):
        key = tuple(sorted(t))
        if key not in self.cache:
            self.prefill([key])
        return self.cache[key]


def _ear_tets(a, b, r0, r1, r2):
    """Tets created by the 2-3 flip on face (a, b, r1) between r0 and r2 (outer ones only)."""
    return [(r0, r2, b, r1), (r0, r2, r1, a)]


def _search(Q, a, b, ring, memo):
    """Best (quality, removal sequence) reducing the ring to three and removing the edge."""
    if ring in memo:
        return memo[ring]
    m = len(ring)
    if m == 3:
        tets = [(a,) + ring, (b,) + ring]
        if not _orientations_ok(Q, a, b, ring, tets):
            res = (-1.0, None)
        else:
            res = (min(Q.alpha(t) for t in tets), ())
        memo[ring] = res
        return res
    best = (-1.0, None)
    for k in range(m):
        r0, r1, r2 = ring[k], ring[(k + 1) % m], ring[(k + 2) % m]
        outer = _ear_tets(a, b, r0, r1, r2)
        if not _ear_ok(Q, a, b, r0, r1, r2):
            continue
        rest = tuple(v for v in ring if v != r1)
        q_rest, seq = _search(Q, a, b, rest, memo)
        if seq is None:
            continue
        q = min(q_rest, *(Q.alpha(t) for t in outer))
        cand = (q, (r1,) + seq)
        if cand[0] > best[0] or (cand[0] == best[0] and best[1] is not None and cand[1] < best[1]):
            best = cand
    memo[ring] = best
    return best


def _signed(Q, t):
    return Q.signed(t)


def _ear_ok(Q, a, b, r0, r1, r2):
    """2-3 flip on face (a, b, r1) is valid: the star of the new edge r0-r2 with ring
    (a, b, r1) keeps the orientation of the two star tets it replaces."""
    ref = np.sign(_signed(Q, (a, b, r0, r1)))
    if ref == 0 or np.sign(_signed(Q, (a, b, r1, r2))) != ref:
        return False
    new = [(a, b, r0, r2)] + _ear_tets(a, b, r0, r1, r2)
    return all(np.sign(_signed(Q, t)) == ref for t in new)


def _orientations_ok(Q, a, b, ring, tets=None):
    """3-2 flip removing (a, b) is valid: the star is consistently oriented and the
    edge pierces the ring triangle."""
    r0, r1, r2 = ring
    ref = np.sign(_signed(Q, (a, b, r0, r1)))
    if ref == 0:
        return False
    if np.sign(_signed(Q, (a, b, r1, r2))) != ref or np.sign(_signed(Q, (a, b, r2, r0))) != ref:
        return False
    sa = np.sign(_signed(Q, (a, r0, r1, r2)))
    sb = np.sign(_signed(Q, (b, r0, r1, r2)))
    return sa != 0 and sa == -sb


def plan_edge_removal(mesh, positions, edge, excluded=frozenset(), csr=None, max_star=7, quality=None):
    """Best flip sequence removing an interior edge, or None.

    The first flip must avoid the generators in `excluded`.
    """
    P = getattr(positions, "positions", positions)
    a, b = sorted(int(v) for v in edge)
    if not mesh.has_edge((a, b)):
        return None
    ring, _ = _ring_of(mesh, (a, b))
    if ring is None or not 3 <= len(ring) <= max_star:
        return None
    if csr is None:
        csr = vertex_neighbors(mesh)
    Q = quality or _Quality(P, csr)
    memo = {}
    m = len(ring)
    # every tet the search can create is an edge end plus three ring vertices
    Q.prefill([(v,) + tri for v in (a, b) for tri in combinations(ring, 3)])
    if m == 3:
        if set(ring) & excluded or a in excluded or b in excluded:
            return None
        q, seq = _search(Q, a, b, ring, memo)
        return None if seq is None else EdgeRemovalPlan((a, b), ring, seq, q)
    best = None
    for k in range(m):
        r0, r1, r2 = ring[k], ring[(k + 1) % m], ring[(k + 2) % m]
        gens = {a, b, r0, r1, r2}
        if m == 4:
            gens = {a, b} | set(ring)
        if gens & excluded:
            continue
        if not _ear_ok(Q, a, b, r0, r1, r2):
            continue
        rest = tuple(v for v in ring if v != r1)
        q_rest, seq = _search(Q, a, b, rest, memo)
        if seq is None:
            continue
        q = min(q_rest, *(Q.alpha(t) for t in _ear_tets(a, b, r0, r1, r2)))
        cand = EdgeRemovalPlan((a, b), ring, (r1,) + seq, q)
        if best is None or q > best.quality or (q == best.quality and cand.removals < best.removals):
            best = cand
    return best


def next_event(mesh, positions, plan, excluded=frozenset()):
    """FlipEvent for the next flip of a plan on the current mesh, or None when invalid."""
    P = getattr(positions, "positions", positions)
    a, b = plan.edge
    if not mesh.has_edge((a, b)):
        return None
    ring, _ = _ring_of(mesh, (a, b))
    if ring is None:
        return None
    todo = plan.removals[plan.cursor:]
    Q = _Quality(P, None)
    if len(ring) == 3 and not todo:
        if ({a, b} | set(ring)) & excluded or not _orientations_ok(Q, a, b, ring):
            return None
        return _event_32(mesh, a, b, ring)
    if not todo or todo[0] not in ring:
        return None
    m = len(ring)
    k = (ring.index(todo[0]) - 1) % m
    r0, r1, r2 = ring[k], todo[0], ring[(k + 2) % m]
    if m == 4 and len(todo) == 1:
        gens = {a, b} | set(ring)
        if gens & excluded or not _ear_ok(Q, a, b, r0, r1, r2):
            return None
        rest = tuple(v for v in ring if v != r1)
        if not _orientations_ok(Q, a, b, rest, None):
            return None
        return _event_44(mesh, a, b, ring, r0, r2)
    if {a, b, r0, r1, r2} & excluded or not _ear_ok(Q, a, b, r0, r1, r2):
        return None
    removed = [tuple(mesh.tets[t]) for t in mesh.edge_tets((a, b))
               if r1 in mesh.tets[t] and (r0 in mesh.tets[t] or r2 in mesh.tets[t])]
    created = [(a, b, r0, r2)] + _ear_tets(a, b, r0, r1, r2)
    return event_from_tets("23", removed, created)


def _event_32(mesh, a, b, ring):
    removed = [tuple(mesh.tets[t]) for t in mesh.edge_tets((a, b))]
    return event_from_tets("32", removed, [(a,) + ring, (b,) + ring])


def _event_44(mesh, a, b, ring, c, d):
    removed = [tuple(mesh.tets[t]) for t in mesh.edge_tets((a, b))]
    e, f = [v for v in ring if v not in (c, d)]
    created = [(c, d, y, z) for y in (a, b) for z in (e, f)]
    return event_from_tets("44", removed, created)


@dataclass
class FlipConfig:
    alpha_trigger: float = 0.99
    min_gain: float = 1e-6
    max_star: int = 7
    max_candidates: int = 200


@dataclass
class OptimizeReport:
    events: list = field(default_factory=list)
    worst_alpha_before: float = 1.0
    worst_alpha_after: float = 1.0
    pending: int = 0


def optimize_step(mesh, new_positions, pending_plans=(), config=None):
    """One round of incremental flips.

    Returns (new Tetrahedralization, list of FlipEvent, pending plans, report).
    """
    config = config or FlipConfig()
    P = getattr(new_positions, "positions", new_positions)
    csr = vertex_neighbors(mesh)
    alpha = tet_alpha_batch(mesh.tets, P, csr)
    report = OptimizeReport(worst_alpha_before=float(alpha.min()) if len(alpha) else 1.0)
    used = set()
    events = []
    kept = []
    # 1) continue pending plans
    for plan in pending_plans:
        ev = next_event(mesh, P, plan, frozenset(used))
        if ev is None:
            continue
        events.append(ev)
        used |= ev.generators
        adv = EdgeRemovalPlan(plan.edge, plan.ring, plan.removals, plan.quality,
                              plan.cursor + (2 if ev.kind == "44" else 1))
        if ev.kind == "23":
            kept.append(adv)
    # 2) priority queue of bad tets, 3) new plans, first flip only
    order = np.argsort(alpha, kind="stable")
    Q = _Quality(P, csr)
    tried = set()
    n_cand = 0
    for t in order:
        if alpha[t] >= config.alpha_trigger or n_cand >= config.max_candidates:
            break
        n_cand += 1
        verts = [int(v) for v in mesh.tets[t]]
        if set(verts) & used:
            continue
        best = None
        for e in combinations(sorted(verts), 2):
            if e in tried:
                continue
            tried.add(e)
            plan = plan_edge_removal(mesh, P, e, frozenset(used), csr, config.max_star, Q)
            if plan is None:
                continue
            star = mesh.edge_tets(e)
            current = float(alpha[star].min())
            if plan.quality < current + config.min_gain:
                continue
            if best is None or plan.quality > best.quality:
                best = plan
        if best is None:
            continue
        ev = next_event(mesh, P, best, frozenset(used))
        if ev is None:
            continue
        events.append(ev)
        used |= ev.generators
        if ev.kind == "23":
            kept.append(EdgeRemovalPlan(best.edge, best.ring, best.removals, best.quality, 1))
    new_mesh = apply_flips(mesh, P, events) if events else mesh
    if events:
        alpha_new = tet_alpha_batch(new_mesh.tets, P, vertex_neighbors(new_mesh))
        report.worst_alpha_after = float(alpha_new.min())
    else:
        report.worst_alpha_after = report.worst_alpha_before
    report.events = events
    report.pending = len(kept)
    return new_mesh, events, kept, report


# --------------------------------------------------------------------------
# diagnostics

MOTION_CSV_FIELDS = ("step", "t", "dt", "mu", "flips_23", "flips_32", "flips_44",
                     "worst_alpha_before", "worst_alpha_after")


def write_motion_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MOTION_CSV_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in MOTION_CSV_FIELDS})
