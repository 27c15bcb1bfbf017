from itertools import permutations

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.linalg import expm

from holeale.flips import (apply_flips, cavity_volumes, created_volumes, diff_meshes, flip_23,
                           flip_32, flip_44)
from holeale.mesh_core import (Box, GeometryError, TopologyError, Tetrahedralization,
                               build_dual, characteristic_length, perm_sign, read_mesh,
                               star_region, tet_volumes, validate_tessellation, write_mesh)
from holeale.mesh_motion import (DampedVelocity, LinearVelocity, blend, circumspheres, compute_mu,
                                 optimize_step, plan_edge_removal, smoothed_positions,
                                 taylor_advance, tet_alpha_batch, tet_quality, vertex_neighbors)
from holeale.scenarios import (RotatingCore, cubic_ramp, delaunay_mesh, kuhn_lattice, oriented,
                               rotating_sphere_layout, sanity_meshes)

REGULAR = np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])


# ---------------------------------------------------------------- mesh_core

def test_box_flags_and_projection():
    box = Box((0, 0, 0), (2, 1, 1))
    assert box.volume == 2.0
    flags = box.flags_of(np.array([[0, 0.5, 0.5], [2, 1, 0.5], [1, 0.5, 0.5]]))
    assert flags.tolist() == [0b000001, 0b001010, 0]
    p = box.project(np.array([[0.1, 0.9, 0.5]]), np.array([0b001001]))
    assert np.allclose(p, [[0.0, 1.0, 0.5]])


def test_perm_sign_matches_parity():
    ref = np.array([[0, 1, 2, 3]] * 24)
    quad = np.array(list(permutations(range(4))))
    inv = [sum(p[i] > p[j] for i in range(4) for j in range(i + 1, 4)) for p in quad]
    assert perm_sign(ref, quad).tolist() == [1 - 2 * (k % 2) for k in inv]


@pytest.fixture(scope="module")
def lattice():
    gens, mesh = kuhn_lattice((0, 0, 0), (1, 1, 1), 4)
    return gens, mesh, build_dual(mesh, gens)


def test_kuhn_lattice_counts(lattice):
    gens, mesh, _ = lattice
    assert len(gens) == 125 and len(mesh) == 6 * 64
    assert np.allclose(tet_volumes(gens.positions, mesh.tets), 1 / 64 / 6)


def test_dual_partitions_box(lattice):
    gens, mesh, dual = lattice
    rep = validate_tessellation(dual, 1.0)
    assert rep["violations"] == [] and rep["negative_sub_tets"] == 0
    assert rep["watertight_residual"] <= 1e-14


def test_interior_dual_cell_volume(lattice):
    # centroid dual: each tet gives a quarter to each vertex, an interior Kuhn
    # vertex touches 24 tets of volume h^3 / 6
    gens, mesh, dual = lattice
    h = 0.25
    interior = np.all((gens.positions > 0.1) & (gens.positions < 0.9), axis=1)
    assert np.allclose(dual.volumes[interior], h ** 3, rtol=1e-13)
    cell = dual.cell(int(np.nonzero(interior)[0][0]))
    assert characteristic_length(cell) > 0
    assert cell.volume == pytest.approx(h ** 3)


@given(st.integers(0, 10_000))
def test_random_delaunay_dual_is_watertight(seed):
    rng = np.random.default_rng(seed)
    box = Box((0, 0, 0), (1, 1, 1))
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    P = np.concatenate([corners, rng.uniform(0.1, 0.9, (20, 3))])
    try:
        gens, mesh = delaunay_mesh(P, box)
    except ValueError:
        assume(False)
    dual = build_dual(mesh, gens)
    rep = validate_tessellation(dual, 1.0)
    assert rep["watertight_residual"] <= 1e-12
    assert not [v for v in rep["violations"] if v[0] in ("symmetry", "open_cell")]


def test_star_region_and_queries(lattice):
    _, mesh, _ = lattice
    order, closed = star_region(mesh, (0, 1))
    assert not closed
    e = tuple(int(v) for v in mesh.edges[np.argmax(mesh.edge_star_size)])
    order, closed = star_region(mesh, e)
    assert closed and len(order) == mesh.edge_star_size.max()
    assert mesh.find_tet(mesh.tets[7]) == 7
    assert mesh.find_tet([0, 1, 2, 3]) == -1
    with pytest.raises(TopologyError):
        mesh.edge_index((0, 124))


def test_validate_rejects_inverted(lattice):
    gens, mesh, _ = lattice
    bad = Tetrahedralization(mesh.tets[:, [1, 0, 2, 3]], mesh.NP)
    with pytest.raises(GeometryError):
        bad.validate(gens.positions)


def test_mesh_file_roundtrip(tmp_path, lattice):
    gens, mesh, _ = lattice
    write_mesh(tmp_path / "m.txt", gens, mesh)
    g2, m2 = read_mesh(tmp_path / "m.txt", gens.box)
    assert np.array_equal(g2.positions, gens.positions)
    assert np.array_equal(g2.flags, gens.flags)
    assert np.array_equal(m2.tets, mesh.tets)


# ---------------------------------------------------------------- flips

@pytest.mark.parametrize("flip", ["32", "23", "44"])
def test_sanity_flip_is_recovered(flip):
    gens, m0, m1 = sanity_meshes(flip)
    (ev,) = diff_meshes(m0, m1)
    assert ev.kind == flip
    m = apply_flips(m0, gens.positions, [ev])
    assert {tuple(sorted(t)) for t in m.tets.tolist()} == {tuple(sorted(t)) for t in m1.tets.tolist()}
    r, c = cavity_volumes(gens.positions, ev)
    assert abs(r - c) <= 1e-12 * r


def random_bipyramid(rng):
    """Triangle r0 r1 r2 pierced by segment a-b: both 2-3 and 3-2 configurations are valid."""
    R = rng.normal(size=(3, 3))
    n = np.cross(R[1] - R[0], R[2] - R[0])
    n /= np.linalg.norm(n)
    w = rng.dirichlet([2, 2, 2])
    c = w @ R
    a = c + rng.uniform(0.2, 2) * n
    b = c - rng.uniform(0.2, 2) * n
    return np.concatenate([[a, b], R])


@given(st.integers(0, 10_000))
def test_23_and_32_preserve_cavity_volume(seed):
    P = random_bipyramid(np.random.default_rng(seed))
    two = oriented(P, [[0, 2, 3, 4], [1, 2, 3, 4]])
    mesh2 = Tetrahedralization(two, 5)
    ev = flip_23(mesh2, (2, 3, 4))
    r, c = cavity_volumes(P, ev)
    assert abs(r - c) <= 1e-12 * r
    assert np.all(created_volumes(P, ev) > 0)
    mesh3 = apply_flips(mesh2, P, [ev])
    back = flip_32(mesh3, (0, 1))
    assert set(back.created) == set(ev.removed)
    assert abs(np.sum(tet_volumes(P, mesh3.tets)) - np.sum(tet_volumes(P, two))) <= 1e-12 * r


@given(st.integers(0, 10_000))
def test_44_preserves_cavity_volume(seed):
    rng = np.random.default_rng(seed)
    # perturbed octahedron: a, b on z, ring c e d f in the plane
    P = np.array([[0, 0, 1], [0, 0, -1], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], float)
    P += rng.uniform(-0.15, 0.15, P.shape)
    ring = [2, 3, 4, 5]
    tets = oriented(P, [[0, 1, ring[k], ring[(k + 1) % 4]] for k in range(4)])
    mesh = Tetrahedralization(tets, 6)
    ev = flip_44(mesh, (0, 1), (2, 4))
    r, c = cavity_volumes(P, ev)
    assert abs(r - c) <= 1e-12 * r
    assert ev.vanishing == (0, 1) and ev.appearing == (2, 4)


def test_flip_preconditions(lattice):
    _, mesh, _ = lattice
    with pytest.raises(TopologyError):
        flip_32(mesh, (0, 1))
    with pytest.raises(TopologyError):
        flip_44(mesh, (0, 1), (2, 3))


# ---------------------------------------------------------------- motion

def test_taylor_advance_is_fourth_order():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3))
    f = LinearVelocity(A)
    p = rng.normal(size=(4, 3))
    errs = []
    for dt in (0.1, 0.05):
        exact = p @ expm(A * dt).T
        errs.append(np.abs(taylor_advance(p, f, dt) - exact).max())
    assert np.log2(errs[0] / errs[1]) > 4.7


def test_damped_velocity_derivatives_match_fd():
    rng = np.random.default_rng(4)
    base = LinearVelocity(rng.normal(size=(3, 3)), rng.normal(size=3))
    f = DampedVelocity(base, lambda z: cubic_ramp(z, 0.0, 10.0, 2.0))
    p = np.array([[0.3, 0.2, 1.1], [0.1, -0.4, 9.2]])
    v, J, H, T = f.derivatives(p)
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        vp, Jp, Hp, _ = f.derivatives(p + e)
        vm, Jm, Hm, _ = f.derivatives(p - e)
        assert np.allclose(J[:, :, k], (vp - vm) / (2 * h), atol=1e-8)
        assert np.allclose(H[:, :, :, k], (Jp - Jm) / (2 * h), atol=1e-7)
        assert np.allclose(T[:, :, :, :, k], (Hp - Hm) / (2 * h), atol=1e-6)


def test_rotating_core_advance_is_rigid():
    f = RotatingCore(np.pi, 0.3)
    p = np.array([[0.2, 0.0, 0.1], [0.5, 0.0, 0.0]])
    q = f.advance(p, 0.5)
    assert np.allclose(q, [[0.0, 0.2, 0.1], [0.5, 0.0, 0.0]], atol=1e-15)
    assert np.allclose(taylor_advance(p, f, 1e-3), f.advance(p, 1e-3), atol=1e-14)


def test_tet_quality_and_circumspheres():
    assert tet_quality(REGULAR) == pytest.approx(1.0)
    assert tet_quality(REGULAR * [1, 1, 0.3]) > 1.0
    c, r, ok = circumspheres(REGULAR[None] + 0.5)
    assert ok[0] and np.allclose(c, 0.5) and r[0] == pytest.approx(np.sqrt(3))


def test_blend_and_mu():
    assert np.allclose(blend([0, 0, 0], [1, 1, 1], 0.25), 0.25)
    assert compute_mu(1.0, 0.1, 0.2, 0.5) == pytest.approx(0.5)
    assert compute_mu(10.0, 10.0, 0.1) == 1.0
    with pytest.raises(ValueError):
        blend([0.0], [1.0], 1.5)
    with pytest.raises(ValueError):
        compute_mu(0.0, 0.1, 0.1)


def test_smoothing_fixes_regular_lattice_interior(lattice):
    gens, mesh, _ = lattice
    P, inverted = smoothed_positions(mesh, gens.positions)
    assert inverted == 0 and np.all(np.isfinite(P))


def test_delaunay_mesh_needs_no_flips():
    gens, mesh = rotating_sphere_layout()
    alpha = tet_alpha_batch(mesh.tets, gens.positions, vertex_neighbors(mesh))
    assert np.all((alpha >= 0) & (alpha <= 1))
    assert 250 <= len(gens) <= 350
    new, events, pending, rep = optimize_step(mesh, gens.positions)
    assert np.all(tet_volumes(gens.positions, new.tets) > 0)
    assert rep.worst_alpha_after >= rep.worst_alpha_before


def test_optimize_step_repairs_rotated_core():
    gens, mesh = rotating_sphere_layout()
    P = RotatingCore().advance(gens.positions, 0.1)
    new, events, pending, rep = optimize_step(mesh, P)
    assert events
    assert np.all(tet_volumes(P, new.tets) > 0)
    assert np.sum(tet_volumes(P, new.tets)) == pytest.approx(8.0, rel=1e-13)
    for ev in events:
        r, c = cavity_volumes(P, ev)
        assert abs(r - c) <= 1e-12 * r
    used = [g for ev in events for g in ev.generators]
    assert len(used) == len(set(used))


def test_plan_for_boundary_edge_is_none(lattice):
    gens, mesh, _ = lattice
    assert plan_edge_removal(mesh, gens.positions, (0, 1)) is None


# ---------------------------------------------------------------- scenario helpers

def test_cubic_ramp_values_and_derivative():
    z = np.array([0.0, 1.0, 2.0, 5.0, 8.0, 9.0, 10.0])
    g, d1, _, _ = cubic_ramp(z)
    assert np.allclose(g, [0, 0.5, 1, 1, 1, 0.5, 0])
    assert np.allclose(d1[[0, 2, 3, 4, 6]], 0.0)
    zz = np.linspace(0.1, 9.9, 50)
    h = 1e-6
    assert np.allclose(cubic_ramp(zz)[1], (cubic_ramp(zz + h)[0] - cubic_ramp(zz - h)[0]) / (2 * h), atol=1e-7)


def test_fibonacci_sphere_and_box_surface():
    from holeale.scenarios import box_surface_points, fibonacci_sphere
    P = fibonacci_sphere(40, 0.24)
    assert np.allclose(np.linalg.norm(P, axis=1), 0.24)
    assert np.linalg.norm(P.mean(axis=0)) < 0.02
    Q = box_surface_points((-1, -1, -1), (1, 1, 1), 4, np.random.default_rng(0))
    assert len(Q) == 5 ** 3 - 3 ** 3
    assert np.all(np.isclose(np.abs(Q), 1.0).any(axis=1))
    corners = np.isclose(np.abs(Q), 1.0).all(axis=1)
    assert corners.sum() == 8
