"""Space-time control volumes connecting two dual tessellations.

Every facet of the tessellation at t^n is paired with a facet at t^{n+1}
(same key), giving a facet track whose lateral surface is the bilinear prism
between the two triangles.  Around each flip the unmatched facets are
completed by degenerate tracks (a facet collapsing to a segment or a point at
one end of the step), by per-cell copies of the vanishing or appearing face,
and by "gap" faces; the copies and gaps bound a hole-like element whose 3D
slices vanish at both ends of the step.

Volumes are indexed 0..NP-1 for the cells and NP.. for the holes; walls are
encoded as -1 - wall.  Each facet track is stored once, oriented outward from
its owner.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .mesh_core import CAT_EDGE, GeometryError, TopologyError, _CAT_STRIDE
from .quadrature import QuadratureRule, line_rule, reference_quadrature, tet_rule

_TRACK = np.int64(1) << 31


# --------------------------------------------------------------------------
# single prism surfaces

@dataclass
class STPrismSurface:
    """Bilinear space-time prism: x1..x3 at t0, x4..x6 at t0 + dt (paired)."""
    vertices: np.ndarray
    t0: float = 0.0
    dt: float = 1.0
    sign: float = 1.0


def beta_weights(z1, z2, tau):
    z1, z2, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (z1, z2, tau)))
    z3 = 1.0 - z1 - z2
    return np.stack([(1 - tau) * z1, (1 - tau) * z2, (1 - tau) * z3,
                     tau * z1, tau * z2, tau * z3], axis=-1)


def beta_eval(surface, z1, z2, tau):
    """4D point (x, y, z, t) of the prism at reference coordinates."""
    w = beta_weights(z1, z2, tau)
    x = w @ np.asarray(surface.vertices, dtype=float)
    t = surface.t0 + np.asarray(tau, dtype=float) * surface.dt
    return np.concatenate([x, np.broadcast_to(t, x.shape[:-1])[..., None]], axis=-1)


def generalized_cross(u1, u2, u3):
    """4D vector orthogonal to u1, u2, u3 (cofactor expansion of [e; u1; u2; u3])."""
    u1, u2, u3 = np.broadcast_arrays(u1, u2, u3)
    out = np.empty(u1.shape[:-1] + (4,))
    cols = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
    for k in range(4):
        a, b, c = (u[..., cols[k]] for u in (u1, u2, u3))
        det = np.einsum("...i,...i->...", a, np.cross(b, c))
        out[..., k] = det if k % 2 == 0 else -det
    return out


def prism_tangents(Xn, Xn1, dt, z1, z2, tau):
    """Tangent vectors of prism tracks.

    Xn, Xn1 : (..., 3, 3) triangle vertices at both ends; z1, z2, tau broadcastable.
    Returns three (..., 4) arrays.
    """
    z1 = np.asarray(z1)[..., None]
    z2 = np.asarray(z2)[..., None]
    tau = np.asarray(tau)[..., None]
    a0 = Xn[..., 0, :] - Xn[..., 2, :]
    b0 = Xn[..., 1, :] - Xn[..., 2, :]
    a1 = Xn1[..., 0, :] - Xn1[..., 2, :]
    b1 = Xn1[..., 1, :] - Xn1[..., 2, :]
    da = (1 - tau) * a0 + tau * a1
    db = (1 - tau) * b0 + tau * b1
    S0 = z1 * Xn[..., 0, :] + z2 * Xn[..., 1, :] + (1 - z1 - z2) * Xn[..., 2, :]
    S1 = z1 * Xn1[..., 0, :] + z2 * Xn1[..., 1, :] + (1 - z1 - z2) * Xn1[..., 2, :]
    dtau = S1 - S0
    zero = np.zeros(da.shape[:-1] + (1,))
    u1 = np.concatenate([da, zero], axis=-1)
    u2 = np.concatenate([db, zero], axis=-1)
    u3 = np.concatenate([dtau, np.full(dtau.shape[:-1] + (1,), dt)], axis=-1)
    return u1, u2, u3


def prism_normals(Xn, Xn1, dt, z1, z2, tau):
    """Unnormalized outward normals (..., 4) of prism tracks."""
    return generalized_cross(*prism_tangents(Xn, Xn1, dt, z1, z2, tau))


def st_normal_jacobian(surface, z1, z2, tau, tol=1e-300):
    """(unit 4D normal, jacobian magnitude) of a prism at a reference point."""
    V = np.asarray(surface.vertices, dtype=float)
    Nv = surface.sign * prism_normals(V[:3], V[3:], surface.dt, z1, z2, tau)
    jac = np.linalg.norm(Nv, axis=-1)
    safe = np.where(jac > tol, jac, 1.0)
    n = np.where((jac > tol)[..., None], Nv / safe[..., None], 0.0)
    return n, np.where(jac > tol, jac, 0.0)


def prism_measure(surface, N=1):
    rule = reference_quadrature("prism", N)
    z = rule.nodes
    _, jac = st_normal_jacobian(surface, z[:, 0], z[:, 1], z[:, 2])
    return float(np.sum(rule.weights * jac)) * 1.0


# --------------------------------------------------------------------------
# the space-time mesh

@dataclass
class HoleElement:
    kind: str
    index: int               # volume id
    event: object
    center: np.ndarray
    h: float
    neighbors: tuple         # adjacent cells
    facets: np.ndarray       # facet-track ids bounding the hole
    tracks: np.ndarray       # (K, 2, 3) distinct vertex tracks
    measure: float = 0.0


@dataclass
class STControlVolume:
    index: int
    facets: np.ndarray       # facet-track ids
    signs: np.ndarray        # +1 owner, -1 neighbor view
    neighbors: tuple         # W_i: cells, holes (>= NP) and walls (< 0)
    apex: np.ndarray         # (2, 3)
    measure: float = 0.0


@dataclass
class STGeometry:
    t0: float
    dt: float
    NP: int
    P0: np.ndarray           # point coordinates at t^n
    P1: np.ndarray           # point coordinates at t^{n+1}
    tracks: np.ndarray       # (F, 3, 2) point ids (vertex, level)
    owner: np.ndarray
    nbr: np.ndarray
    apex: np.ndarray         # (NV, 2, 3) apex track of each volume
    holes: list
    vol0: np.ndarray         # |P_i^n|
    vol1: np.ndarray         # |P_i^{n+1}|
    dual0: object = None
    dual1: object = None
    flips: list = field(default_factory=list)

    @property
    def NV(self):
        return len(self.apex)

    def facet_coords(self):
        X0 = self.P0[self.tracks[:, :, 0]]
        X1 = self.P1[self.tracks[:, :, 1]]
        return X0, X1

    def surfaces(self, f):
        X0, X1 = self.P0[self.tracks[f, :, 0]], self.P1[self.tracks[f, :, 1]]
        return STPrismSurface(np.concatenate([X0, X1]), self.t0, self.dt)

    def volume_facets(self, v):
        own = np.nonzero(self.owner == v)[0]
        nb = np.nonzero(self.nbr == v)[0]
        return np.concatenate([own, nb]), np.concatenate([np.ones(len(own)), -np.ones(len(nb))])

    def control_volume(self, i):
        f, s = self.volume_facets(i)
        other = np.where(s > 0, self.nbr[f], self.owner[f])
        W = tuple(sorted(set(int(v) for v in other)))
        return STControlVolume(i, f, s, W, self.apex[i], float(self.measures()[i]))

    # ---- sub-tet tracks
    def sub_tets(self):
        """All sub-tet tracks: (S, 4, 2, 3) coords, volume id (S,), sign (S,).

        Sub-tets of owner views come first, then neighbor views (reversed).
        """
        X0, X1 = self.facet_coords()
        fac = np.stack([X0, X1], axis=2)       # (F, 3, 2, 3)
        out, vid, sgn = [], [], []
        for cells, flip in ((self.owner, False), (self.nbr, True)):
            m = np.nonzero(cells >= 0)[0]
            v = cells[m]
            f = fac[m][:, [0, 2, 1]] if flip else fac[m]
            ap = self.apex[v][:, None]           # (S, 1, 2, 3)
            out.append(np.concatenate([ap, f], axis=1))
            vid.append(v)
            sgn.append(np.full(len(m), -1.0 if flip else 1.0))
        return np.concatenate(out), np.concatenate(vid), np.concatenate(sgn)

    def slice_volumes(self, tau):
        """Signed 3D volumes of every volume's slice at the given tau values: (NV, len(tau))."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        S, vid, _ = self.sub_tets()
        out = np.zeros((self.NV, len(tau)))
        for q, t in enumerate(tau):
            x = (1 - t) * S[:, :, 0] + t * S[:, :, 1]
            v = np.einsum("ij,ij->i", x[:, 1] - x[:, 0],
                          np.cross(x[:, 2] - x[:, 0], x[:, 3] - x[:, 0])) / 6.0
            out[:, q] = np.bincount(vid, weights=v, minlength=self.NV)
        return out

    def measures(self, N=1):
        """4D measures of all volumes with the Gauss time rule for degree N."""
        rule = reference_quadrature("time", N)
        sv = self.slice_volumes(rule.nodes[:, 0])
        return self.dt * sv @ rule.weights

    def normal_closure(self, N=1):
        """Integral of the outward normal over each closed volume boundary: (NV, 4)."""
        rule = reference_quadrature("prism", N)
        z = rule.nodes
        X0, X1 = self.facet_coords()
        Nn = prism_normals(X0[:, None], X1[:, None], self.dt, z[:, 0], z[:, 1], z[:, 2])
        tot = np.einsum("fqk,q->fk", Nn, rule.weights)
        out = np.zeros((self.NV, 4))
        m = self.owner >= 0
        np.add.at(out, self.owner[m], tot[m])
        m = self.nbr >= 0
        np.add.at(out, self.nbr[m], -tot[m])
        caps = np.zeros(self.NV)
        caps[:self.NP] = self.vol1 - self.vol0
        out[:, 3] += caps
        return out


def _decode_tri(key, NP):
    tc = (key - CAT_EDGE * _CAT_STRIDE) // 3
    k = tc % NP
    j = (tc // NP) % NP
    i = tc // NP // NP
    return i, j, k


class _Builder:
    def __init__(self, d0, d1):
        self.d = (d0, d1)
        self.extra = ([], [])
        self.base = (len(d0.points), len(d1.points))
        self.rows, self.own, self.nbr = [], [], []

    def new_point(self, L, xyz):
        self.extra[L].append(np.asarray(xyz, dtype=float))
        return self.base[L] + len(self.extra[L]) - 1

    def coord(self, L, pid):
        if pid < self.base[L]:
            return self.d[L].points[pid]
        return self.extra[L][pid - self.base[L]]

    def add(self, trk, owner, nbr):
        self.rows.append(trk)
        self.own.append(owner)
        self.nbr.append(nbr)

    def tet_pid(self, L, verts):
        d = self.d[L]
        t = d.mesh.find_tet(verts)
        if t < 0:
            raise TopologyError(f"tet {verts} missing at level {L}")
        return d.offsets["tet"] + t

    def tet_of_pid(self, L, pid):
        d = self.d[L]
        off = d.offsets["tet"]
        if not (off <= pid < off + len(d.mesh)):
            raise TopologyError("flip facet vertex is not a tet centroid")
        return tuple(sorted(int(v) for v in d.mesh.tets[pid - off]))

    def bary_pid(self, L, e):
        d = self.d[L]
        return d.offsets["bary"] + d.mesh.edge_index(e)


def _map_tet(verts, cands, must):
    best, score, tie = None, -1, False
    for t in cands:
        if not set(must) <= set(t):
            continue
        s = len(set(t) & set(verts))
        if s > score:
            best, score, tie = t, s, False
        elif s == score:
            tie = True
    if best is None or tie:
        raise TopologyError(f"cannot pair tet {verts} across the flip")
    return best


def _handle_flip(b, ev, hole_id, sel):
    cav = (ev.removed, ev.created)
    special = (ev.vanishing, ev.appearing)
    by_edge = ({}, {})
    for L in (0, 1):
        d = b.d[L]
        for f in sel[L]:
            e = (int(d.facet_owner[f]), int(d.facet_nbr[f]))
            by_edge[L].setdefault(e, []).append(f)
    for L in (0, 1):
        Lo = 1 - L
        d = b.d[L]
        for e, fs in sorted(by_edge[L].items()):
            if special[L] is not None and e == tuple(special[L]):
                for g in e:
                    rows = []
                    for f in fs:
                        ap, v1, v2 = (int(x) for x in d.facets[f])
                        m1 = b.tet_pid(Lo, _map_tet(b.tet_of_pid(L, v1), cav[Lo], (g,)))
                        m2 = b.tet_pid(Lo, _map_tet(b.tet_of_pid(L, v2), cav[Lo], (g,)))
                        rows.append((ap, v1, v2, m1, m2))
                    mean = np.mean([b.coord(Lo, m) for r in rows for m in r[3:]], axis=0)
                    A = b.new_point(Lo, mean)
                    for ap, v1, v2, m1, m2 in rows:
                        if L == 0:
                            trk = [(ap, A), (v1, m1), (v2, m2)]
                        else:
                            trk = [(A, ap), (m1, v1), (m2, v2)]
                        if g != e[0]:
                            trk = [trk[0], trk[2], trk[1]]
                        b.add(trk, g, hole_id)
            elif e in by_edge[Lo]:
                if L == 1:
                    continue
                f0s, f1s = fs, by_edge[1][e]
                if len(f0s) != 1 or len(f1s) != 1:
                    raise TopologyError(f"ambiguous facet pairing on edge {e}")
                a0, p1, p2 = (int(x) for x in b.d[0].facets[f0s[0]])
                a1, q1, q2 = (int(x) for x in b.d[1].facets[f1s[0]])
                t1 = set(b.tet_of_pid(0, p1))
                s11 = len(t1 & set(b.tet_of_pid(1, q1)))
                s12 = len(t1 & set(b.tet_of_pid(1, q2)))
                if s11 <= s12:
                    raise TopologyError(f"inconsistent facet orientation on edge {e}")
                b.add([(a0, a1), (p1, q1), (p2, q2)], e[0], e[1])
            else:
                bo = b.bary_pid(Lo, e)
                for f in fs:
                    ap, v1, v2 = (int(x) for x in d.facets[f])
                    m1 = b.tet_pid(Lo, _map_tet(b.tet_of_pid(L, v1), cav[Lo], e))
                    m2 = b.tet_pid(Lo, _map_tet(b.tet_of_pid(L, v2), cav[Lo], e))
                    if L == 0:
                        trk = [(ap, bo), (v1, m1), (v2, m2)]
                    else:
                        trk = [(bo, ap), (m1, v1), (m2, v2)]
                    b.add(trk, e[0], e[1])


def _open_loops(segs):
    """Chain directed segments (s, t) into closed loops."""
    succ = {}
    for s, t in segs:
        if s in succ:
            raise TopologyError("open boundary is not a simple loop")
        succ[s] = t
    loops = []
    while succ:
        s0 = min(succ)
        loop = [s0]
        cur = succ.pop(s0)
        while cur != s0:
            if cur not in succ:
                raise TopologyError("open boundary does not close")
            loop.append(cur)
            cur = succ.pop(cur)
        loops.append(loop)
    return loops


def _cell_segments(tracks, owner, nbr, g):
    """Directed segments (track codes) of cell g that are not cancelled."""
    code = tracks[:, :, 0].astype(np.int64) * _TRACK + tracks[:, :, 1]
    cnt = defaultdict(int)
    for cells, flip in ((owner, False), (nbr, True)):
        idx = np.nonzero(cells == g)[0]
        for f in idx:
            c = code[f][[0, 2, 1]] if flip else code[f]
            for a, bb in ((0, 1), (1, 2), (2, 0)):
                if c[a] != c[bb]:
                    cnt[(int(c[a]), int(c[bb]))] += 1
    out = []
    for (s, t), n in cnt.items():
        r = cnt.get((t, s), 0)
        out += [(s, t)] * max(0, n - r)
    return out


def _incircle_diameter(A, B, C):
    a = np.linalg.norm(B - C)
    bb = np.linalg.norm(A - C)
    c = np.linalg.norm(A - B)
    area = 0.5 * np.linalg.norm(np.cross(B - A, C - A))
    per = a + bb + c
    return 4.0 * area / per if per > 0 else 0.0


def build_spacetime(d0, d1, flips, t0, dt):
    """Space-time mesh between tessellations d0 (t0) and d1 (t0 + dt)."""
    NP = d0.NP
    k0, k1 = d0.facet_key, d1.facet_key
    _, i0, i1 = np.intersect1d(k0, k1, assume_unique=True, return_indices=True)
    if np.any(d0.facet_owner[i0] != d1.facet_owner[i1]) or np.any(d0.facet_nbr[i0] != d1.facet_nbr[i1]):
        raise TopologyError("matched facets change owner")
    tr = np.stack([d0.facets[i0], d1.facets[i1]], axis=2)
    own = d0.facet_owner[i0]
    nb = d0.facet_nbr[i0]
    un = (np.setdiff1d(np.arange(len(k0)), i0), np.setdiff1d(np.arange(len(k1)), i1))
    b = _Builder(d0, d1)
    used = (np.zeros(len(k0), bool), np.zeros(len(k1), bool))
    for h, ev in enumerate(flips):
        G = np.array(sorted(ev.generators))
        sel = []
        for L in (0, 1):
            d = (d0, d1)[L]
            cand = un[L]
            cand = cand[d.facet_key[cand] < _CAT_STRIDE]
            tri = np.stack(_decode_tri(d.facet_key[cand], NP), axis=1)
            inside = np.isin(tri, G).all(axis=1)
            sel.append(cand[inside])
            if np.any(used[L][cand[inside]]):
                raise TopologyError("flip cavities overlap")
            used[L][cand[inside]] = True
        _handle_flip(b, ev, NP + h, sel)
    for L in (0, 1):
        if not np.all(used[L][un[L]]):
            raise TopologyError(f"{int(np.sum(~used[L][un[L]]))} facets at level {L} left unmatched")

    def stacked():
        if b.rows:
            extra = np.array(b.rows, dtype=np.int64)
            return (np.concatenate([tr, extra]), np.concatenate([own, b.own]).astype(np.int64),
                    np.concatenate([nb, b.nbr]).astype(np.int64))
        return tr, own, nb

    tracks, owner, nbr = stacked()
    # gap faces close the cells of each flip against its hole
    for h, ev in enumerate(flips):
        hid = NP + h
        for g in sorted(ev.generators):
            segs = _cell_segments(tracks, owner, nbr, g)
            for loop in _open_loops(segs):
                pts = [(c // _TRACK, c % _TRACK) for c in loop]
                A0 = b.new_point(0, np.mean([b.coord(0, p[0]) for p in pts], axis=0))
                A1 = b.new_point(1, np.mean([b.coord(1, p[1]) for p in pts], axis=0))
                # loop runs s -> t in the cell's view; gap facets traverse t -> s
                for s, t in zip(pts, pts[1:] + pts[:1]):
                    b.add([(A0, A1), t, s], g, hid)
    tracks, owner, nbr = stacked()

    P0 = np.concatenate([d0.points] + ([np.array(b.extra[0])] if b.extra[0] else []))
    P1 = np.concatenate([d1.points] + ([np.array(b.extra[1])] if b.extra[1] else []))
    apex = np.zeros((NP + len(flips), 2, 3))
    apex[:NP, 0] = d0.centroids
    apex[:NP, 1] = d1.centroids
    holes = []
    for h, ev in enumerate(flips):
        hid = NP + h
        fids = np.nonzero(nbr == hid)[0]
        tk = tracks[fids].reshape(-1, 2)
        uniq = np.unique(tk[:, 0] * _TRACK + tk[:, 1])
        pts = np.stack([P0[uniq // _TRACK], P1[uniq % _TRACK]], axis=1)
        apex[hid] = pts.mean(axis=0)
        old_c = np.array([d0.points[d0.offsets["tet"] + d0.mesh.find_tet(t)] for t in ev.removed])
        new_c = np.array([d1.points[d1.offsets["tet"] + d1.mesh.find_tet(t)] for t in ev.created])
        center = np.concatenate([old_c, new_c]).mean(axis=0)
        hh = _hole_scale(old_c, new_c)
        nbrs = tuple(sorted(set(int(v) for v in owner[fids])))
        holes.append(HoleElement(ev.kind, hid, ev, center, hh, nbrs, fids, pts))
    geo = STGeometry(t0, dt, NP, P0, P1, tracks, owner, nbr, apex, holes,
                     d0.volumes.copy(), d1.volumes.copy(), d0, d1, list(flips))
    meas = geo.measures()
    for hol in holes:
        hol.measure = float(meas[hol.index])
        if not hol.measure > 0:
            raise GeometryError(f"hole {hol.index} has non-positive 4D measure {hol.measure}")
    return geo


def _face_scale(pts):
    """Incircle diameter of a triangle, or the smallest one of a quad's diagonal split."""
    if len(pts) == 2:
        return float(np.linalg.norm(pts[1] - pts[0]))
    if len(pts) == 3:
        return _incircle_diameter(*pts)
    c = pts.mean(axis=0)
    # order the quad around its centroid
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    if np.linalg.norm(n) == 0:
        n = np.cross(pts[1] - pts[0], pts[3] - pts[0])
    u = pts[0] - c
    v = np.cross(n, u)
    ang = np.arctan2((pts - c) @ v, (pts - c) @ u)
    q = pts[np.argsort(ang)]
    return min(_incircle_diameter(q[0], q[1], q[2]), _incircle_diameter(q[0], q[2], q[3]))


def _hole_scale(old_c, new_c):
    vals = [_face_scale(old_c), _face_scale(new_c)]
    vals = [v for v in vals if v > 0]
    return float(min(vals)) if vals else 1.0


# --------------------------------------------------------------------------
# quadrature nodes on the space-time mesh

class VolumeQuadrature:
    """Quadrature nodes of space-time volumes, gathered per volume.

    Each volume is the union of its sub-tet tracks; a node of a sub-tet at
    reference point xi and time fraction tau sits at the affine image of xi
    in the tau-slice, with weight w_xi * w_tau * dt * (6 * signed volume).
    Chunks are padded to a common sub-tet count with zero weights.
    """

    def __init__(self, geo, n_time, tet):
        self.geo = geo
        S, vid, _ = geo.sub_tets()
        order = np.argsort(vid, kind="stable")
        self.S = S[order]
        self.vid = vid[order]
        counts = np.bincount(self.vid, minlength=geo.NV)
        self.ptr = np.concatenate([[0], np.cumsum(counts)])
        self.time = line_rule(n_time)
        self.tet = tet if isinstance(tet, QuadratureRule) else tet_rule(tet)
        xi = self.tet.nodes
        self.lam = np.stack([1.0 - xi.sum(axis=1), xi[:, 0], xi[:, 1], xi[:, 2]], axis=1)

    def _gather(self, vids):
        vids = np.asarray(vids)
        cnt = self.ptr[vids + 1] - self.ptr[vids]
        smax = max(int(cnt.max()) if len(cnt) else 0, 1)
        idx = np.full((len(vids), smax), -1, dtype=np.int64)
        for r, v in enumerate(vids):
            idx[r, :cnt[r]] = np.arange(self.ptr[v], self.ptr[v + 1])
        mask = idx >= 0
        S = self.S[np.where(mask, idx, 0)]            # (C, smax, 4, 2, 3)
        return S, mask

    @staticmethod
    def _dets(X):
        return np.einsum("...i,...i->...", X[..., 1, :] - X[..., 0, :],
                         np.cross(X[..., 2, :] - X[..., 0, :], X[..., 3, :] - X[..., 0, :]))

    def nodes(self, vids):
        """Space-time nodes of the given volumes.

        Returns x (C, Q, 3), t (C, Q), w (C, Q); Q = smax * n_time * n_tet.
        """
        S, mask = self._gather(vids)
        tau = self.time.nodes[:, 0]
        X = (1.0 - tau)[:, None, None] * S[:, :, None, :, 0] + tau[:, None, None] * S[:, :, None, :, 1]
        det = self._dets(X) * mask[:, :, None]                          # (C, s, T)
        x = np.einsum("qk,cstkd->cstqd", self.lam, X)
        w = det[..., None] * self.time.weights[None, None, :, None] * self.tet.weights * self.geo.dt
        t = np.broadcast_to(self.geo.t0 + tau[None, None, :, None] * self.geo.dt, w.shape)
        C = len(vids)
        return x.reshape(C, -1, 3), np.ascontiguousarray(t).reshape(C, -1), w.reshape(C, -1)

    def slice_nodes(self, vids, level):
        """Spatial nodes of the volumes' slices at t^n (level 0) or t^{n+1} (level 1)."""
        S, mask = self._gather(vids)
        X = S[:, :, :, level]
        det = self._dets(X) * mask
        x = np.einsum("qk,cskd->csqd", self.lam, X)
        w = det[..., None] * self.tet.weights
        C = len(vids)
        return x.reshape(C, -1, 3), w.reshape(C, -1)


def facet_nodes(geo, rule, fids=None):
    """Prism-rule nodes on facet tracks.

    Returns x (F, Q, 3), t (Q,), weighted unnormalized normals wN (F, Q, 4)
    pointing from owner to neighbor.
    """
    fids = np.arange(len(geo.tracks)) if fids is None else np.asarray(fids)
    X0 = geo.P0[geo.tracks[fids, :, 0]]
    X1 = geo.P1[geo.tracks[fids, :, 1]]
    z = rule.nodes
    z1, z2, tau = z[:, 0], z[:, 1], z[:, 2]
    bw = beta_weights(z1, z2, tau)                                     # (Q, 6)
    V = np.concatenate([X0, X1], axis=1)                               # (F, 6, 3)
    x = np.einsum("qj,fjd->fqd", bw, V)
    Nv = prism_normals(X0[:, None], X1[:, None], geo.dt, z1, z2, tau)
    t = geo.t0 + tau * geo.dt
    return x, t, Nv * rule.weights[None, :, None]


def dump_holes(geo, path=None, N=1):
    """Plain-text description of every hole: kind, vertex tracks and per-facet 4D measures."""
    rule = reference_quadrature("prism", N)
    lines = [f"# holes {len(geo.holes)} t0 {geo.t0!r} dt {geo.dt!r}"]
    for h in geo.holes:
        lines.append(f"hole {h.index} kind {h.kind} measure {h.measure:.16e} "
                     f"center {h.center[0]:.16e} {h.center[1]:.16e} {h.center[2]:.16e} h {h.h:.16e}")
        lines.append(f"neighbors {' '.join(str(v) for v in h.neighbors)}")
        for k, tr in enumerate(h.tracks):
            a, b = tr
            lines.append(f"track {k} {a[0]:.16e} {a[1]:.16e} {a[2]:.16e} {b[0]:.16e} {b[1]:.16e} {b[2]:.16e}")
        _, _, wN = facet_nodes(geo, rule, h.facets)
        meas = np.linalg.norm(wN / rule.weights[None, :, None], axis=2) @ rule.weights
        for f, m in zip(h.facets, meas):
            lines.append(f"surface {int(f)} owner {int(geo.owner[f])} measure {m:.16e}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text

