"""Tetrahedralization of the generators and its centroid-based dual.

The dual cell of generator i is bounded by one face per incident edge plus
one planar face per wall the generator lies on.  The face of edge {i, j} is a
fan of triangular facets around its barycenter b_ij; each facet is spanned by
b_ij and the two "side points" of one triangle containing the edge (the
centroids of the two tets sharing it, or one centroid and its projection on
the wall for boundary triangles).

Everything that later has to be matched between two time levels carries an
integer key built from generator indices only: facets are keyed by
(triangle, local edge), so persistent facets pair up across a timestep.
"""

from dataclasses import dataclass, field

import numpy as np

# walls 0..5 are x-, x+, y-, y+, z-, z+
NWALLS = 6
_TRI_EDGES = ((0, 1, 2), (0, 2, 1), (1, 2, 0))   # (i, j, third) in a sorted triangle
_TET_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# facet categories in the key space
CAT_EDGE, CAT_WALLTRI, CAT_WALLLINE = 0, 1, 2
_CAT_STRIDE = 10 ** 16


class TopologyError(RuntimeError):
    """Broken adjacency, open interior stars or edges that do not exist."""


class GeometryError(RuntimeError):
    """Inverted or degenerate geometry."""


@dataclass(frozen=True)
class Box:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def scale(self):
        return float(np.max(np.subtract(self.hi, self.lo)))

    def wall_normal(self, w):
        n = np.zeros(3)
        n[w // 2] = 1.0 if w % 2 else -1.0
        return n

    def wall_value(self, w):
        return (self.hi if w % 2 else self.lo)[w // 2]

    def flags_of(self, points, tol=1e-10):
        points = np.atleast_2d(points)
        s = tol * self.scale
        flags = np.zeros(len(points), dtype=np.int64)
        for w in range(NWALLS):
            on = np.abs(points[:, w // 2] - self.wall_value(w)) <= s
            flags |= on.astype(np.int64) << w
        return flags

    def project(self, points, mask):
        """Project points onto the intersection of the walls set in `mask` (per point)."""
        out = np.array(points, dtype=float, copy=True)
        mask = np.broadcast_to(np.asarray(mask, dtype=np.int64), out.shape[:-1])
        for w in range(NWALLS):
            on = (mask >> w) & 1 == 1
            out[on, w // 2] = self.wall_value(w)
        return out


@dataclass
class GeneratorSet:
    positions: np.ndarray
    box: Box
    flags: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.flags is None:
            self.flags = self.box.flags_of(self.positions)
        self.flags = np.asarray(self.flags, dtype=np.int64)

    def __len__(self):
        return len(self.positions)

    def moved(self, positions):
        return GeneratorSet(np.asarray(positions, dtype=float), self.box, self.flags.copy())


def tet_volumes(P, tets):
    a = P[tets[:, 0]]
    return np.einsum("ij,ij->i", P[tets[:, 1]] - a,
                     np.cross(P[tets[:, 2]] - a, P[tets[:, 3]] - a)) / 6.0


def perm_sign(ref, quad):
    """Sign of the permutation taking each row of `ref` to the same row of `quad`."""
    pos = np.argmax(ref[:, None, :] == quad[:, :, None], axis=2)
    inv = np.zeros(len(ref), dtype=np.int64)
    for a in range(4):
        for b in range(a + 1, 4):
            inv += pos[:, a] > pos[:, b]
    return 1 - 2 * (inv % 2)


def tri_code(tri, NP):
    tri = np.asarray(tri, dtype=np.int64)
    return (tri[..., 0] * NP + tri[..., 1]) * NP + tri[..., 2]


def edge_code(e, NP):
    e = np.asarray(e, dtype=np.int64)
    return e[..., 0] * NP + e[..., 1]


def tet_code(t, NP):
    t = np.sort(np.asarray(t, dtype=np.int64), axis=-1)
    return ((t[..., 0] * NP + t[..., 1]) * NP + t[..., 2]) * NP + t[..., 3]


class Tetrahedralization:
    """Positively oriented tets over NP generators with derived adjacency."""

    def __init__(self, tets, NP):
        self.tets = np.ascontiguousarray(np.asarray(tets, dtype=np.int64).reshape(-1, 4))
        self.NP = int(NP)
        self._built = False

    def __len__(self):
        return len(self.tets)

    def copy(self):
        return Tetrahedralization(self.tets.copy(), self.NP)

    def _build(self):
        if self._built:
            return
        T = self.tets
        NT = len(T)
        NP = self.NP
        faces = np.sort(T[:, _TET_FACES], axis=2).reshape(-1, 3)
        fcode = tri_code(faces, NP)
        order = np.argsort(fcode, kind="stable")
        codes, first, counts = np.unique(fcode[order], return_index=True, return_counts=True)
        if np.any(counts > 2):
            raise TopologyError("a triangle is shared by more than two tets")
        owner_face = order[first]
        tri = faces[owner_face]
        sideA = owner_face // 4
        oppA = T[sideA, owner_face % 4]
        sideB = np.full(len(codes), -1, dtype=np.int64)
        oppB = np.full(len(codes), -1, dtype=np.int64)
        two = counts == 2
        second = order[first[two] + 1]
        sideB[two] = second // 4
        oppB[two] = T[sideB[two], second % 4]
        nbr = np.full((NT, 4), -1, dtype=np.int64)
        nbr[sideA[two], owner_face[two] % 4] = sideB[two]
        nbr[sideB[two], second % 4] = sideA[two]
        self.tri = tri
        self.tri_codes = codes
        self.tri_tets = np.stack([sideA, sideB], axis=1)
        self.tri_opp = np.stack([oppA, oppB], axis=1)
        self.neighbors = nbr
        tet_tri = np.empty(NT * 4, dtype=np.int64)
        tet_tri[order] = np.repeat(np.arange(len(codes)), counts)
        self.tet_tri = tet_tri.reshape(NT, 4)

        ed = np.sort(T[:, _TET_EDGES], axis=2).reshape(-1, 2)
        ecode = edge_code(ed, NP)
        ecodes, einv, ecount = np.unique(ecode, return_inverse=True, return_counts=True)
        self.edges = np.stack([ecodes // NP, ecodes % NP], axis=1)
        self.edge_codes = ecodes
        self.tet_edge = einv.reshape(NT, 6)
        self.edge_star_size = ecount
        eorder = np.argsort(einv, kind="stable")
        self.edge_tets_ptr = np.concatenate([[0], np.cumsum(ecount)])
        self.edge_tets_idx = eorder // 6

        vt = T.ravel()
        border = np.argsort(vt, kind="stable")
        bcount = np.bincount(vt, minlength=NP)
        self.ball_ptr = np.concatenate([[0], np.cumsum(bcount)])
        self.ball_idx = border // 4
        self._tet_lookup = None
        self._built = True

    # -- queries -------------------------------------------------------------
    def ball(self, i):
        self._build()
        return self.ball_idx[self.ball_ptr[i]:self.ball_ptr[i + 1]]

    def edge_index(self, edge):
        self._build()
        a, b = sorted(int(v) for v in edge)
        c = a * self.NP + b
        k = np.searchsorted(self.edge_codes, c)
        if k >= len(self.edge_codes) or self.edge_codes[k] != c:
            raise TopologyError(f"edge {(a, b)} not in mesh")
        return int(k)

    def has_edge(self, edge):
        try:
            self.edge_index(edge)
            return True
        except TopologyError:
            return False

    def edge_tets(self, edge):
        k = self.edge_index(edge)
        return self.edge_tets_idx[self.edge_tets_ptr[k]:self.edge_tets_ptr[k + 1]]

    def find_tet(self, verts):
        """Index of the tet with this vertex set, or -1."""
        self._build()
        if self._tet_lookup is None:
            codes = tet_code(self.tets, self.NP)
            order = np.argsort(codes)
            self._tet_lookup = (codes[order], order)
        codes, order = self._tet_lookup
        c = int(tet_code(np.array(verts), self.NP))
        k = np.searchsorted(codes, c)
        if k < len(codes) and codes[k] == c:
            return int(order[k])
        return -1

    def boundary_triangles(self):
        self._build()
        return np.nonzero(self.tri_tets[:, 1] < 0)[0]

    def is_interior_edge(self, edge):
        """True when the star of the edge closes around it."""
        return star_region(self, edge)[1]

    def validate(self, positions):
        """Raise when a tet is inverted or adjacency is broken."""
        self._build()
        vol = tet_volumes(np.asarray(positions), self.tets)
        if np.any(vol <= 0):
            raise GeometryError(f"{int(np.sum(vol <= 0))} tets with non-positive volume")
        return vol


def star_region(mesh, edge):
    """Tets around an edge in cyclic order and whether the cycle closes.

    Returns (list of tet indices, closed flag).
    """
    mesh._build()
    a, b = sorted(int(v) for v in edge)
    tets = [int(t) for t in mesh.edge_tets((a, b))]
    if len(tets) == 1:
        return tets, False
    T = mesh.tets

    def across(t, other):
        # neighbor of t through the face {a, b, other}
        row = T[t]
        missing = [v for v in row if v not in (a, b, other)][0]
        return int(mesh.neighbors[t, list(row).index(missing)])

    def others(t):
        return [int(v) for v in T[t] if v not in (a, b)]

    tset = set(tets)
    # find an end of an open star: a tet with a face on the edge that has no neighbor
    start, start_other = tets[0], others(tets[0])[0]
    closed = True
    for t in tets:
        for o in others(t):
            if across(t, o) < 0:
                start, closed = t, False
                start_other = [v for v in others(t) if v != o][0]
                break
        if not closed:
            break
    order = [start]
    prev_other = None
    cur = start
    nxt_other = start_other
    while True:
        n = across(cur, nxt_other)
        if n < 0:
            break
        if n not in tset:
            raise TopologyError(f"broken adjacency around edge {(a, b)}")
        if n == start:
            break
        order.append(n)
        prev_other = nxt_other
        nxt_other = [v for v in others(n) if v != prev_other][0]
        cur = n
    if len(order) != len(tets):
        raise TopologyError(f"broken adjacency around edge {(a, b)}")
    return order, closed


# --------------------------------------------------------------------------
# dual tessellation

@dataclass
class PolyFace:
    owner: int
    neighbor: int          # generator index, or -1 - wall for wall faces
    contour: np.ndarray    # ordered contour points (K, 3)
    barycenter: np.ndarray
    facets: np.ndarray     # (K', 3, 3) oriented outward from owner


@dataclass
class PolyCell:
    generator: int
    faces: list
    vertices: np.ndarray
    centroid: np.ndarray
    volume: float
    h: float
    sub_tets: np.ndarray   # (S, 4, 3), apex first


@dataclass
class PolyTessellation:
    """Flat-array form of the dual.

    points: coordinates of all facet vertices; point_cat/point_code give their
    identity (0 tet centroid, 1 edge barycenter, 2 wall point of a boundary
    triangle, 3 wall-face apex, 4 generator).
    facets: (F, 3) point ids, apex first; normal (p1-p0) x (p2-p0) points from
    facet_owner into facet_nbr (a generator, or -1 - wall).
    """
    mesh: Tetrahedralization
    generators: GeneratorSet
    points: np.ndarray
    point_cat: np.ndarray
    point_code: np.ndarray
    facets: np.ndarray
    facet_owner: np.ndarray
    facet_nbr: np.ndarray
    facet_key: np.ndarray
    facet_edge: np.ndarray     # edge index for edge facets, -1 for wall facets
    centroids: np.ndarray
    volumes: np.ndarray
    h: np.ndarray
    offsets: dict = field(default_factory=dict)

    @property
    def NP(self):
        return len(self.centroids)

    def neighbor_map(self):
        V = [set() for _ in range(self.NP)]
        inner = self.facet_nbr >= 0
        for i, j in zip(self.facet_owner[inner], self.facet_nbr[inner]):
            V[i].add(int(j))
            V[j].add(int(i))
        return V

    def facet_coords(self):
        return self.points[self.facets]

    def cell_facets(self, i):
        """Facet coordinates of cell i oriented outward, plus the neighbor of each."""
        own = np.nonzero(self.facet_owner == i)[0]
        nb = np.nonzero(self.facet_nbr == i)[0]
        X = self.points[self.facets]
        fac = np.concatenate([X[own], X[nb][:, [0, 2, 1]]])
        other = np.concatenate([self.facet_nbr[own], self.facet_owner[nb]])
        return fac, other

    def sub_tets(self, i):
        fac, _ = self.cell_facets(i)
        apex = np.broadcast_to(self.centroids[i], (len(fac), 1, 3))
        return np.concatenate([apex, fac], axis=1)

    def cell(self, i):
        fac, other = self.cell_facets(i)
        faces = []
        for j in np.unique(other):
            sel = other == j
            ff = fac[sel]
            faces.append(PolyFace(int(i), int(j), _contour_of(ff), ff[0, 0].copy(), ff))
        verts_mask = np.zeros(len(self.points), dtype=bool)
        own = np.concatenate([np.nonzero(self.facet_owner == i)[0], np.nonzero(self.facet_nbr == i)[0]])
        verts_mask[self.facets[own].ravel()] = True
        verts_mask &= self.point_cat == 0
        return PolyCell(int(i), faces, self.points[verts_mask], self.centroids[i].copy(),
                        float(self.volumes[i]), float(self.h[i]), self.sub_tets(i))


def _contour_of(facets):
    """Chain the non-apex segments of a fan into an ordered point list."""
    key = lambda p: tuple(np.round(p, 13))
    succ = {}
    coords = {}
    for f in facets:
        succ[key(f[1])] = key(f[2])
        coords[key(f[1])] = f[1]
        coords[key(f[2])] = f[2]
    heads = set(succ) - set(succ.values())
    start = min(heads) if heads else next(iter(succ))
    out = [coords[start]]
    cur = start
    for _ in range(len(succ)):
        nxt = succ.get(cur)
        if nxt is None or nxt == start:
            break
        out.append(coords[nxt])
        cur = nxt
    return np.array(out)


def characteristic_length(cell):
    """2 * min distance from the cell centroid to its face barycenters."""
    if len(cell.faces) < 4:
        raise ValueError("cell needs at least 4 faces")
    return 2.0 * min(float(np.linalg.norm(cell.centroid - f.barycenter)) for f in cell.faces)


def _lowest_bit(m):
    m = np.asarray(m, dtype=np.int64)
    out = np.full(m.shape, -1, dtype=np.int64)
    for w in range(NWALLS - 1, -1, -1):
        out[(m >> w) & 1 == 1] = w
    return out


def build_dual(mesh, gens):
    """Centroid-based dual tessellation of a tetrahedralization of a box."""
    mesh._build()
    P = gens.positions
    flags = gens.flags
    box = gens.box
    NP = mesh.NP
    T = mesh.tets
    NT = len(T)
    cent = P[T].mean(axis=1)

    tri = mesh.tri
    ntri = len(tri)
    tt = mesh.tri_tets
    wall_tri = np.nonzero(tt[:, 1] < 0)[0]
    wmask = flags[tri[wall_tri, 0]] & flags[tri[wall_tri, 1]] & flags[tri[wall_tri, 2]]
    if np.any(wmask == 0):
        raise TopologyError("boundary triangle not lying on a wall")
    wall_of = _lowest_bit(wmask)
    wall_pts = box.project(cent[tt[wall_tri, 0]], np.int64(1) << wall_of)
    tri_wallpt = np.full(ntri, -1, dtype=np.int64)
    tri_wallpt[wall_tri] = np.arange(len(wall_tri))

    # edge barycenters
    E = len(mesh.edges)
    te = mesh.tet_edge.ravel()
    bsum = np.zeros((E, 3))
    np.add.at(bsum, te, np.repeat(cent, 6, axis=0))
    bary = bsum / mesh.edge_star_size[:, None]
    ed_all = np.stack([tri[:, [0, 0, 1]], tri[:, [1, 2, 2]]], axis=2)  # (ntri, 3, 2)
    tri_edge = np.searchsorted(mesh.edge_codes, edge_code(ed_all, NP))
    bnd_edge = np.zeros(E, dtype=bool)
    bnd_edge[tri_edge[wall_tri].ravel()] = True
    ebnd = np.nonzero(bnd_edge)[0]
    emask = flags[mesh.edges[ebnd, 0]] & flags[mesh.edges[ebnd, 1]]
    bary[ebnd] = box.project(bary[ebnd], emask)

    # point table
    off_tet, off_b, off_w = 0, NT, NT + E
    off_a = off_w + len(wall_tri)
    # wall apexes: (generator, wall) pairs present in wall triangles
    wt_v = tri[wall_tri]                         # (NWT, 3)
    pair_code = wt_v * NWALLS + wall_of[:, None]
    apex_codes = np.unique(pair_code)
    off_g = off_a + len(apex_codes)
    npts = off_g + NP
    points = np.zeros((npts, 3))
    points[:NT] = cent
    points[off_b:off_w] = bary
    points[off_w:off_a] = wall_pts
    points[off_g:] = P
    cat = np.concatenate([np.zeros(NT), np.ones(E), np.full(len(wall_tri), 2),
                          np.full(len(apex_codes), 3), np.full(NP, 4)]).astype(np.int64)
    code = np.concatenate([tet_code(T, NP), mesh.edge_codes, mesh.tri_codes[wall_tri],
                           apex_codes, np.arange(NP)]).astype(np.int64)

    # ---- edge facets: one per (triangle, local edge)
    fac_list, own_list, nbr_list, key_list, fedge_list = [], [], [], [], []
    for le, (a, b, c) in enumerate(_TRI_EDGES):
        i = tri[:, a]
        j = tri[:, b]
        k = tri[:, c]
        sA = perm_sign(T[tt[:, 0]], np.stack([i, j, k, mesh.tri_opp[:, 0]], axis=1))
        ptA = tt[:, 0] + off_tet
        ptB = np.where(tt[:, 1] >= 0, tt[:, 1] + off_tet, tri_wallpt + off_w)
        v1 = np.where(sA < 0, ptA, ptB)
        v2 = np.where(sA < 0, ptB, ptA)
        eidx = tri_edge[:, le]
        fac_list.append(np.stack([eidx + off_b, v1, v2], axis=1))
        own_list.append(i)
        nbr_list.append(j)
        key_list.append(CAT_EDGE * _CAT_STRIDE + mesh.tri_codes * 3 + le)
        fedge_list.append(eidx)

    # ---- wall facets
    wT = tt[wall_tri, 0]
    sgn = perm_sign(T[wT], np.column_stack([wt_v, mesh.tri_opp[wall_tri, 0]]))
    # ccw (outward) vertex order of each wall triangle
    ccw = np.where(sgn[:, None] < 0, wt_v, wt_v[:, [0, 2, 1]])
    wpt = np.arange(len(wall_tri)) + off_w
    apex_of = lambda v, w: off_a + np.searchsorted(apex_codes, v * NWALLS + w)
    bidx = lambda u, v: off_b + np.searchsorted(mesh.edge_codes, edge_code(np.sort(np.stack([u, v], -1), -1), NP))
    for r in range(3):
        v = ccw[:, r]
        nx_ = ccw[:, (r + 1) % 3]
        pv = ccw[:, (r + 2) % 3]
        A = apex_of(v, wall_of)
        bn = bidx(v, nx_)
        bp = bidx(v, pv)
        lv = np.argmax(wt_v == v[:, None], axis=1)
        base = CAT_WALLTRI * _CAT_STRIDE + (mesh.tri_codes[wall_tri] * 3 + lv) * 2
        fac_list.append(np.stack([A, bn, wpt], axis=1))
        fac_list.append(np.stack([A, wpt, bp], axis=1))
        own_list += [v, v]
        nbr_list += [-1 - wall_of, -1 - wall_of]
        key_list += [base, base + 1]
        fedge_list += [np.full(len(v), -1), np.full(len(v), -1)]
        # closing segments along cube edges
        for other, first in ((nx_, True), (pv, False)):
            common = flags[v] & flags[other]
            line = (common & ~(np.int64(1) << wall_of)) != 0
            if not np.any(line):
                continue
            sel = np.nonzero(line)[0]
            g = off_g + v[sel]
            bb = bidx(v[sel], other[sel])
            if first:
                f = np.stack([A[sel], g, bb], axis=1)
            else:
                f = np.stack([A[sel], bb, g], axis=1)
            fac_list.append(f)
            own_list.append(v[sel])
            nbr_list.append(-1 - wall_of[sel])
            key_list.append(CAT_WALLLINE * _CAT_STRIDE
                            + (v[sel] * NWALLS + wall_of[sel]) * NP + other[sel])
            fedge_list.append(np.full(len(sel), -1))

    facets = np.concatenate(fac_list).astype(np.int64)
    owner = np.concatenate(own_list).astype(np.int64)
    nbr = np.concatenate(nbr_list).astype(np.int64)
    key = np.concatenate(key_list).astype(np.int64)
    fedge = np.concatenate(fedge_list).astype(np.int64)

    # wall apexes: mean of their polygon points
    wsel = nbr < 0
    apex_ids = facets[wsel, 0]
    asum = np.zeros((len(apex_codes), 3))
    acnt = np.zeros(len(apex_codes))
    for col in (1, 2):
        np.add.at(asum, apex_ids - off_a, points[facets[wsel, col]])
        np.add.at(acnt, apex_ids - off_a, 1.0)
    points[off_a:off_g] = asum / acnt[:, None]

    order = np.argsort(key, kind="stable")
    facets, owner, nbr, key, fedge = facets[order], owner[order], nbr[order], key[order], fedge[order]

    vol, cen = _cell_moments(points, facets, owner, nbr, P, NP)
    if np.any(vol <= 0):
        raise GeometryError("dual cell with non-positive volume")
    h = _char_lengths(points, facets, owner, nbr, cen, NP)
    return PolyTessellation(mesh, gens, points, cat, code, facets, owner, nbr, key, fedge,
                            cen, vol, h,
                            dict(tet=off_tet, bary=off_b, wall=off_w, apex=off_a, gen=off_g))


def _cell_moments(points, facets, owner, nbr, apex_pts, NP):
    X = points[facets]
    vol = np.zeros(NP)
    mom = np.zeros((NP, 3))
    for side, cells, sg in ((0, owner, 1.0), (1, nbr, -1.0)):
        m = cells >= 0
        c = cells[m]
        a = apex_pts[c]
        x = X[m]
        v = sg * np.einsum("ij,ij->i", x[:, 0] - a, np.cross(x[:, 1] - a, x[:, 2] - a)) / 6.0
        np.add.at(vol, c, v)
        np.add.at(mom, c, v[:, None] * (a + x.sum(axis=1)) / 4.0)
    return vol, mom / vol[:, None]


def _char_lengths(points, facets, owner, nbr, cen, NP):
    h = np.full(NP, np.inf)
    b = points[facets[:, 0]]
    for cells in (owner, nbr):
        m = cells >= 0
        d = np.linalg.norm(b[m] - cen[cells[m]], axis=1)
        np.minimum.at(h, cells[m], d)
    return 2.0 * h


def facet_normals(X):
    """Area vectors (F, 3) of facet coordinates X (F, 3, 3)."""
    return 0.5 * np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])


def sub_tet_volumes(t):
    X = t.points[t.facets]
    out = []
    for cells, sg in ((t.facet_owner, 1.0), (t.facet_nbr, -1.0)):
        m = cells >= 0
        a = t.centroids[cells[m]]
        x = X[m]
        out.append(sg * np.einsum("ij,ij->i", x[:, 0] - a, np.cross(x[:, 1] - a, x[:, 2] - a)) / 6.0)
    return np.concatenate(out)


def validate_tessellation(t, domain_volume, area_tol=1e-14):
    """Diagnostic report on watertightness, orientation and neighbor symmetry."""
    report = {"violations": []}
    total = float(np.sum(t.volumes))
    report["watertight_residual"] = abs(total - domain_volume) / domain_volume
    if report["watertight_residual"] > 1e-12:
        report["violations"].append(("watertight", report["watertight_residual"]))
    X = t.points[t.facets]
    n = facet_normals(X)
    P = t.generators.positions
    inner = t.facet_nbr >= 0
    ref = np.zeros_like(n)
    ref[inner] = P[t.facet_nbr[inner]] - P[t.facet_owner[inner]]
    for k in np.nonzero(~inner)[0]:
        ref[k] = t.generators.box.wall_normal(-1 - t.facet_nbr[k])
    dots = np.einsum("ij,ij->i", n, ref)
    scale = t.h[t.facet_owner] ** 2
    bad = np.nonzero((dots <= 0) & (np.linalg.norm(n, axis=1) > area_tol * scale))[0]
    for k in bad:
        report["violations"].append(("orientation", int(k)))
    V = t.neighbor_map()
    for i, Vi in enumerate(V):
        for j in Vi:
            if i not in V[j]:
                report["violations"].append(("symmetry", (i, j)))
    # closed surfaces: every directed segment of a cell appears reversed once
    for k in _open_cells(t):
        report["violations"].append(("open_cell", int(k)))
    sv = sub_tet_volumes(t)
    report["negative_sub_tets"] = int(np.sum(sv < 0))
    return report


def _open_cells(t):
    """Cells whose directed facet segments do not cancel pairwise."""
    F = t.facets
    seg = []
    for cells, flip in ((t.facet_owner, False), (t.facet_nbr, True)):
        m = cells >= 0
        f = F[m][:, [0, 2, 1]] if flip else F[m]
        c = cells[m]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            seg.append(np.stack([c, f[:, a], f[:, b]], axis=1))
    seg = np.concatenate(seg)
    seg = seg[seg[:, 1] != seg[:, 2]]
    npt = len(t.points) + 1
    code_f = (seg[:, 0] * npt + seg[:, 1]) * npt + seg[:, 2]
    code_r = (seg[:, 0] * npt + seg[:, 2]) * npt + seg[:, 1]
    cf, cnt_f = np.unique(code_f, return_counts=True)
    cr, cnt_r = np.unique(code_r, return_counts=True)
    if len(cf) == len(cr) and np.all(cf == cr) and np.all(cnt_f == cnt_r):
        return []
    diff = np.setxor1d(cf, cr)
    return sorted(set((diff // npt // npt).tolist()))


# --------------------------------------------------------------------------
# plain-text mesh format

def write_mesh(path, gens, mesh):
    with open(path, "w") as fh:
        fh.write(f"{len(gens)} {len(mesh)}\n")
        for p, f in zip(gens.positions, gens.flags):
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} {int(f)}\n")
        for t in mesh.tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")


def read_mesh(path, box):
    with open(path) as fh:
        NP, NT = (int(v) for v in fh.readline().split())
        pts = np.loadtxt(fh, max_rows=NP, ndmin=2)
        tets = np.loadtxt(fh, max_rows=NT, dtype=np.int64, ndmin=2)
    gens = GeneratorSet(pts[:, :3], box, pts[:, 3].astype(np.int64))
    return gens, Tetrahedralization(tets, NP)
