"""Elementary 2-3, 3-2 and 4-4 flips on a tetrahedralization."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .mesh_core import Tetrahedralization, TopologyError, star_region, tet_volumes


@dataclass(frozen=True)
class FlipEvent:
    """One elementary connectivity change.

    kind: "32", "23" or "44".  removed/created hold sorted vertex 4-tuples.
    vanishing/appearing: the edge that disappears (3-2, 4-4) and the edge
    that is created (2-3, 4-4), or None.
    """
    kind: str
    removed: tuple
    created: tuple
    vanishing: tuple = None
    appearing: tuple = None

    @property
    def generators(self):
        return frozenset(v for t in self.removed for v in t)

    def ring(self):
        """Cavity vertices other than the vanishing/appearing edges."""
        skip = set(self.vanishing or ()) | set(self.appearing or ())
        return tuple(sorted(self.generators - skip))


def _edges_of(tets):
    return {tuple(sorted(e)) for t in tets for e in combinations(t, 2)}


def event_from_tets(kind, removed, created):
    removed = tuple(sorted(tuple(sorted(int(v) for v in t)) for t in removed))
    created = tuple(sorted(tuple(sorted(int(v) for v in t)) for t in created))
    old_e, new_e = _edges_of(removed), _edges_of(created)
    van = sorted(old_e - new_e)
    app = sorted(new_e - old_e)
    return FlipEvent(kind, removed, created, van[0] if van else None, app[0] if app else None)


def diff_meshes(mesh0, mesh1):
    """Flip events turning mesh0 into mesh1, for cavities that differ by one flip."""
    s0 = {tuple(sorted(t)) for t in mesh0.tets.tolist()}
    s1 = {tuple(sorted(t)) for t in mesh1.tets.tolist()}
    rem = sorted(s0 - s1)
    add = sorted(s1 - s0)
    # group removed/created tets by connected generator cavities
    groups = []
    pool_r, pool_a = list(rem), list(add)
    while pool_r or pool_a:
        seed = set(pool_r[0] if pool_r else pool_a[0])
        grp_r, grp_a = [], []
        changed = True
        while changed:
            changed = False
            for pool, grp in ((pool_r, grp_r), (pool_a, grp_a)):
                for t in list(pool):
                    if len(seed & set(t)) >= 3:
                        grp.append(t)
                        pool.remove(t)
                        seed |= set(t)
                        changed = True
        kind = {(3, 2): "32", (2, 3): "23", (4, 4): "44"}.get((len(grp_r), len(grp_a)))
        if kind is None:
            raise TopologyError(f"cavity with {len(grp_r)} -> {len(grp_a)} tets is not an elementary flip")
        groups.append(event_from_tets(kind, grp_r, grp_a))
    return groups


def _orient(P, tets):
    tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
    neg = tet_volumes(P, tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def flip_32(mesh, edge):
    """Event removing an interior edge shared by exactly three tets."""
    order, closed = star_region(mesh, edge)
    if not closed or len(order) != 3:
        raise TopologyError("3-2 flip needs a closed star of three tets")
    a, b = edge
    ring = _ring(mesh, order, a, b)
    removed = [mesh.tets[t] for t in order]
    created = [(a,) + tuple(ring), (b,) + tuple(ring)]
    return event_from_tets("32", removed, created)


def flip_23(mesh, face):
    """Event replacing the two tets sharing an interior face by three tets."""
    k, l, m = face
    tets = [t for t in mesh.edge_tets((k, l)) if m in mesh.tets[t]]
    if len(tets) != 2:
        raise TopologyError("2-3 flip needs an interior face")
    apex = [int([v for v in mesh.tets[t] if v not in face][0]) for t in tets]
    a, b = apex
    created = [(a, b, k, l), (a, b, l, m), (a, b, m, k)]
    return event_from_tets("23", [mesh.tets[t] for t in tets], created)


def flip_44(mesh, edge, new_edge):
    """Event re-pairing the four tets around an edge onto the ring diagonal new_edge."""
    order, closed = star_region(mesh, edge)
    if not closed or len(order) != 4:
        raise TopologyError("4-4 flip needs a closed star of four tets")
    a, b = edge
    ring = _ring(mesh, order, a, b)
    c, d = new_edge
    if c not in ring or d not in ring or abs(ring.index(c) - ring.index(d)) != 2:
        raise TopologyError("new edge must join opposite ring vertices")
    e, f = [v for v in ring if v not in (c, d)]
    created = [(c, d, y, z) for y in (a, b) for z in (e, f)]
    return event_from_tets("44", [mesh.tets[t] for t in order], created)


def _ring(mesh, order, a, b):
    """Ring vertices around edge (a, b) following the star order."""
    T = mesh.tets
    ring = []
    for t0, t1 in zip(order, order[1:] + order[:1]):
        shared = (set(T[t0].tolist()) & set(T[t1].tolist())) - {a, b}
        ring.append(int(next(iter(shared))))
    return ring


def apply_flips(mesh, positions, events):
    """New tetrahedralization with all events applied; created tets are appended."""
    rem = set()
    for ev in events:
        rem.update(ev.removed)
    keep = [t for t in mesh.tets.tolist() if tuple(sorted(t)) not in rem]
    if len(keep) != len(mesh) - len(rem):
        raise TopologyError("flip removes tets that are not in the mesh")
    new = [list(t) for ev in events for t in ev.created]
    tets = np.array(keep + [list(t) for t in _orient(positions, new)], dtype=np.int64)
    return Tetrahedralization(tets, mesh.NP)


def cavity_volumes(positions, event):
    """(removed volume, created volume) of a flip at the given positions."""
    P = np.asarray(positions)
    r = tet_volumes(P, _orient(P, event.removed))
    c = tet_volumes(P, _orient(P, event.created))
    return float(np.sum(np.abs(r))), float(np.sum(np.abs(c)))


def created_volumes(positions, event, ref_positions=None):
    """Signed volumes of the created tets at `positions`.

    Signs are fixed by the outward orientation of the cavity boundary, taken
    at `ref_positions` (where the removed tets are valid; default: positions).
    """
    P = np.asarray(positions)
    ref = P if ref_positions is None else np.asarray(ref_positions)
    return _signed_like_cavity(P, ref, event.removed, event.created)


def _signed_like_cavity(P, ref, removed, created):
    out = []
    bnd = _cavity_boundary(ref, removed)
    for t in created:
        t = list(t)
        for f in combinations(t, 3):
            key = tuple(sorted(f))
            if key in bnd:
                apex = [v for v in t if v not in f][0]
                o = bnd[key]            # outward-oriented triple
                vol = np.dot(P[apex] - P[o[0]], np.cross(P[o[1]] - P[o[0]], P[o[2]] - P[o[0]])) / 6.0
                out.append(-vol)
                break
        else:
            out.append(np.nan)
    return np.array(out)


def _cavity_boundary(P, tets):
    tets = _orient(P, tets)
    cnt = {}
    orient = {}
    for t in tets.tolist():
        for skip in range(4):
            f = [t[k] for k in range(4) if k != skip]
            # outward orientation: opposite vertex lies on the negative side
            if skip % 2 == 1:
                f = [f[0], f[2], f[1]]
            key = tuple(sorted(f))
            cnt[key] = cnt.get(key, 0) + 1
            orient[key] = f
    return {k: orient[k] for k, c in cnt.items() if c == 1}
