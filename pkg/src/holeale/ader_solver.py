"""Direct ALE ADER-DG time stepping on moving polyhedral meshes with hole elements.

One step: move the generators, repair the tetrahedralization by flips, build
the space-time control volumes (cells plus holes), compute a local space-time
predictor in every cell by Picard iteration, solve the hole elements by
Newton's method, and update the cell coefficients with a conservative
space-time corrector.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .basis import (cardinality, derivative_matrix, eval_theta, monomial_values,
                    psi_values, theta_values)
from .euler_physics import (NVAR, GasModel, StateError, flux, normal_flux_jacobian, pressure,
                    rusanov_ale_dqL, rusanov_raw, sound_speed)
from .flips import diff_meshes
from .mesh_core import GeometryError, TopologyError, build_dual, tet_volumes
from .mesh_motion import (DampedVelocity, FlipConfig, PolynomialVelocity, blend, compute_mu, optimize_step,
                          smoothed_positions, taylor_advance)
from .quadrature import reference_quadrature, symmetric_tet_rule, tet_rule
from .spacetime_geom import VolumeQuadrature, build_spacetime, facet_nodes

CFL_TABLE = (1.0, 0.333, 0.170, 0.104)


class HoleSolveError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    N: int = 1
    gas: GasModel = field(default_factory=GasModel)
    cfl: Optional[float] = None          # default CFL_TABLE[N]
    dt_fixed: Optional[float] = None
    motion: str = "lagrangian"           # "static", "lagrangian" or "prescribed"
    velocity: object = None              # field with .derivatives(points, cells) for "prescribed"
    damping: object = None               # optional z -> (g, g', g'', g''') weight on lagrangian motion
    smoothing: bool = True
    kappa: float = 1.0 / 200.0
    flips: bool = True
    flip_config: FlipConfig = field(default_factory=FlipConfig)
    boosted: bool = False
    picard_tol: float = 1e-12
    picard_max: Optional[int] = None     # default 2 (N + 1)
    newton_tol: float = 1e-13
    newton_max: int = 25
    newton_halvings: int = 10
    sharpness: float = 50.0
    chunk: int = 32
    facet_chunk: int = 2048
    max_retries: int = 4

    def __post_init__(self):
        if self.N not in (0, 1, 2, 3):
            raise ValueError(f"unsupported degree N={self.N}")
        if self.motion not in ("static", "lagrangian", "prescribed"):
            raise ValueError(f"unknown motion {self.motion!r}")
        if self.motion == "prescribed" and self.velocity is None:
            raise ValueError("prescribed motion needs a velocity field")

    @property
    def cfl_number(self):
        return CFL_TABLE[self.N] if self.cfl is None else self.cfl

    @property
    def picard_iterations(self):
        return 2 * (self.N + 1) if self.picard_max is None else self.picard_max


@dataclass
class DGState:
    t: float
    gens: object                 # GeneratorSet
    mesh: object                 # Tetrahedralization
    dual: object                 # PolyTessellation
    uhat: np.ndarray             # (NP, L3, 5) modal coefficients
    hscale: np.ndarray           # (NP,) basis scale per cell
    step: int = 0
    pending: list = field(default_factory=list)

    @property
    def centers(self):
        return self.dual.centroids


# --------------------------------------------------------------------------
# projection and evaluation

def cell_rule(degree):
    """Tet rule exact to `degree`: symmetric when tabulated, collapsed Gauss above."""
    degree = max(2, int(degree))
    return symmetric_tet_rule(degree) if degree <= 6 else tet_rule(degree // 2 + 1)


def default_degree(N):
    return min(max(2, 2 * N + 2), 6)


def cell_quadrature(dual, degree, chunk=256):
    """Yield (cells, x (C, Q, 3), w (C, Q)) over all cells of a tessellation in chunks."""
    geo = build_spacetime(dual, dual, [], 0.0, 1.0)
    vq = VolumeQuadrature(geo, 1, cell_rule(degree))
    for s in range(0, dual.NP, chunk):
        ids = np.arange(s, min(s + chunk, dual.NP))
        x, w = vq.slice_nodes(ids, 0)
        yield ids, x, w


def _phi(dual, hscale, ids, N, x):
    return monomial_values((x - dual.centroids[ids][:, None, :]) / hscale[ids][:, None, None], N)


def project(dual, hscale, N, func, degree=None):
    """L2 projection of func(x) -> (..., 5) onto the cell bases."""
    degree = default_degree(N) if degree is None else degree
    out = np.empty((dual.NP, cardinality(N, 3), NVAR))
    for ids, x, w in cell_quadrature(dual, degree):
        phi = _phi(dual, hscale, ids, N, x)
        phw = phi * w[..., None]
        M = np.swapaxes(phw, 1, 2) @ phi
        out[ids] = np.linalg.solve(M, np.swapaxes(phw, 1, 2) @ func(x))
    return out


def initial_state(gens, mesh, N, func, t=0.0, degree=None):
    """DGState with func projected on the dual of mesh."""
    dual = build_dual(mesh, gens)
    hscale = dual.h.copy()
    uhat = project(dual, hscale, N, func, degree)
    return DGState(t, gens, mesh, dual, uhat, hscale)


def evaluate(state, N, x, cells):
    """Cell polynomials evaluated at points x (..., 3) of the given cells."""
    cells = np.asarray(cells)
    phi = monomial_values((np.asarray(x, dtype=float) - state.centers[cells])
                          / state.hscale[cells][..., None], N)
    return np.einsum("...l,...lv->...v", phi, state.uhat[cells])


def cell_masses(dual, hscale, uhat, N):
    """Integrals of every conserved variable over every cell, (NP, 5)."""
    out = np.empty((dual.NP, NVAR))
    for ids, x, w in cell_quadrature(dual, max(2, N)):
        phi = _phi(dual, hscale, ids, N, x)
        out[ids] = np.einsum("cq,cql,clv->cv", w, phi, uhat[ids])
    return out


# --------------------------------------------------------------------------
# time step size

def compute_dt(state, cfg):
    """(CFL / d) min_i h_i / lambda_i with lambda = |u| + c at the centroid and facet points."""
    d = state.dual
    N = cfg.N
    NP = d.NP
    q_c = evaluate(state, N, d.centroids, np.arange(NP))
    lam = np.linalg.norm(q_c[:, 1:4], axis=1) / q_c[:, 0] + sound_speed(q_c, cfg.gas)
    pts = d.points[d.facets]                          # (F, 3, 3)
    sides = [d.facet_owner, d.facet_nbr]
    for s in sides:
        ok = (s >= 0) & (s < NP)
        cells = np.repeat(s[ok], 3).reshape(-1, 3)
        q = evaluate(state, N, pts[ok], cells)
        l = np.linalg.norm(q[..., 1:4], axis=-1) / q[..., 0] + sound_speed(q, cfg.gas)
        np.maximum.at(lam, s[ok], l.max(axis=1))
    return float(cfg.cfl_number / 3.0 * np.min(d.h / lam))


# --------------------------------------------------------------------------
# hole elements

@dataclass
class HoleSystem:
    """Data of one hole needed by its nonlinear residual.

    Surface data live on the facet nodes (q_cell seen from the neighbor cell,
    weighted normals wN pointing into the hole); volume data on the hole's
    space-time quadrature nodes.
    """
    index: int
    th_s: np.ndarray      # (Fs, L4) hole basis on facet nodes
    q_cell: np.ndarray    # (Fs, 5)
    wN: np.ndarray        # (Fs, 4)
    th_v: np.ndarray      # (Qv, L4)
    tht_v: np.ndarray     # (Qv, L4)
    thg_v: np.ndarray     # (Qv, L4, 3)
    w_v: np.ndarray       # (Qv,)
    scale: float = 1.0


def hole_residual(qh, hs, gas, sharpness=50.0):
    """Residual (..., L4, 5) of the hole's space-time weak form at coefficients qh (..., L4, 5)."""
    qs = hs.th_s @ qh
    F = rusanov_raw(hs.q_cell, qs, hs.wN, gas, smooth=True, sharpness=sharpness)
    R = -hs.th_s.T @ F
    qv = hs.th_v @ qh
    Fv = flux(qv, gas)
    R -= hs.tht_v.T @ (hs.w_v[:, None] * qv)
    R -= np.einsum("qlj,...qvj->...lv", hs.thg_v * hs.w_v[:, None, None], Fv, optimize=True)
    return R


def hole_jacobian(qh, hs, gas, sharpness=50.0):
    """Jacobian d residual / d qh as a (L4 * 5, L4 * 5) matrix."""
    L = hs.th_s.shape[1]
    qs = hs.th_s @ qh
    # flux(q_cell, q_H, n) = -flux(q_H, q_cell, -n)
    Js = rusanov_ale_dqL(qs, hs.q_cell, -hs.wN, gas, sharpness)           # (Fs, 5, 5)

    def outer(T, W, A):
        # sum_q T[q, k] W[q, l] A[q, v, u] as (L, 5, L, 5)
        X = (W[:, :, None, None] * A[:, None]).reshape(len(W), -1)
        return (T.T @ X).reshape(L, L, NVAR, NVAR).transpose(0, 2, 1, 3)

    J = outer(hs.th_s, hs.th_s, Js)
    qv = hs.th_v @ qh
    M = (hs.tht_v * hs.w_v[:, None]).T @ hs.th_v
    J -= M[:, None, :, None] * np.eye(NVAR)[None, :, None, :]
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        A = normal_flux_jacobian(qv, np.broadcast_to(e, qv.shape[:-1] + (3,)), gas)
        J -= outer(hs.thg_v[:, :, j] * hs.w_v[:, None], hs.th_v, A)
    return J.reshape(L * NVAR, L * NVAR)


def _admissible(qh, hs, gas):
    for T in (hs.th_s, hs.th_v):
        q = T @ qh
        if np.any(~(q[:, 0] > 0)) or np.any(~(pressure(q, gas, check=False) > 0)):
            return False
    return True


def solve_hole(hs, guess, cfg):
    """Damped Newton iteration; returns (coefficients, iterations, final residual)."""
    gas, sh = cfg.gas, cfg.sharpness
    x = guess.copy()
    if not _admissible(x, hs, gas):
        raise HoleSolveError(f"hole {hs.index}: inadmissible initial guess")
    R = hole_residual(x, hs, gas, sh)
    nr = np.abs(R).max()
    tol = cfg.newton_tol * hs.scale
    it = 0
    while nr > tol and it < cfg.newton_max:
        it += 1
        J = hole_jacobian(x, hs, gas, sh)
        try:
            dx = np.linalg.solve(J, -R.ravel()).reshape(x.shape)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -R.ravel(), rcond=None)[0].reshape(x.shape)
        lam = 1.0
        for _ in range(cfg.newton_halvings + 1):
            xn = x + lam * dx
            if _admissible(xn, hs, gas):
                Rn = hole_residual(xn, hs, gas, sh)
                nrn = np.abs(Rn).max()
                if nrn < nr:
                    break
            lam *= 0.5
        else:
            # stagnation at round-off level counts as converged
            if nr <= 1e3 * tol:
                break
            raise HoleSolveError(f"hole {hs.index}: Newton stalled at residual {nr:.3e}")
        x, R, nr = xn, Rn, nrn
    if nr > 1e3 * tol:
        raise HoleSolveError(f"hole {hs.index}: no convergence, residual {nr:.3e}")
    return x, it, nr


# --------------------------------------------------------------------------
# one space-time update on a given geometry

@dataclass
class StepReport:
    picard_iterations: int = 0
    newton_iterations: int = 0
    newton_residual: float = 0.0
    holes: int = 0
    mass_before: np.ndarray = None
    mass_after: np.ndarray = None
    hole_systems: list = None     # set to a list to collect each HoleSystem


def _bt(a):
    return np.swapaxes(a, -1, -2)


def _cm(vals):
    """(C, Q, L) basis values as a contiguous (C, L, Q) array."""
    return np.ascontiguousarray(np.swapaxes(vals, -1, -2))


def _pressure_cm(q, gamma):
    rho = q[:, 0]
    return (gamma - 1.0) * (q[:, 4] - 0.5 * (q[:, 1] ** 2 + q[:, 2] ** 2 + q[:, 3] ** 2) / rho)


def _flux_cm(q, gamma):
    """Euler flux of component-major states (C, 5, Q) as (C, 15, Q), row v * 3 + j."""
    rho, m, E = q[:, 0], q[:, 1:4], q[:, 4]
    u = m / rho[:, None]
    p = (gamma - 1.0) * (E - 0.5 * np.einsum("ckq,ckq->cq", m, u))
    F = np.empty((q.shape[0], NVAR, 3, q.shape[2]))
    F[:, 0] = m
    F[:, 1:4] = m[:, :, None] * u[:, None, :]
    for k in range(3):
        F[:, 1 + k, k] += p
    F[:, 4] = (E + p)[:, None] * u
    return F.reshape(q.shape[0], 3 * NVAR, q.shape[2])


def _sparse_sum(index, values, n):
    """Row sums of values (k, ...) grouped by index into n rows."""
    k = len(index)
    A = sp.csr_matrix((np.ones(k), (index, np.arange(k))), shape=(n, k))
    return (A @ values.reshape(k, -1)).reshape((n,) + values.shape[1:])


def space_time_update(geo, uhat, hscale, cfg, report=None):
    """Coefficients at t^{n+1} on geo.dual1 from coefficients uhat at t^n on geo.dual0."""
    report = report if report is not None else StepReport()
    N, gas = cfg.N, cfg.gas
    L3, L4 = cardinality(N, 3), cardinality(N, 4)
    NP, NV = geo.NP, geo.NV
    t0, dt = geo.t0, geo.dt
    n_sp = max(2, N + 1)
    n_t = max(2, N + 2) if cfg.boosted else n_sp
    vq = VolumeQuadrature(geo, n_t, symmetric_tet_rule(max(2, 2 * N)))
    c0, c1 = geo.dual0.centroids, geo.dual1.centroids
    umax = np.abs(uhat).max()

    qhat = np.zeros((NV, L4, NVAR))
    V = np.zeros((NP, L3, NVAR))
    Mn = np.zeros((NP, L3, L3))
    Mn1 = np.zeros((NP, L3, L3))
    # modal derivative matrices: d/dz_j theta_l = sum_m theta_m D4[j][m, l]
    D4 = [derivative_matrix(N, 4, j) for j in range(4)]
    D3 = [derivative_matrix(N, 3, j) for j in range(3)]
    picard_max = 0
    tol = cfg.picard_tol * (1.0 + umax)
    counts = np.diff(vq.ptr)[:NP]
    order = np.argsort(counts, kind="stable")        # similar sizes share a chunk
    for s in range(0, NP, cfg.chunk):
        ids = order[s:s + cfg.chunk]
        C = len(ids)
        x, t, w = vq.nodes(ids)
        cc0 = c0[ids][:, None, :]
        cc1 = c1[ids][:, None, :]
        hh = hscale[ids][:, None, None]
        sfrac = ((t - t0) / dt)[..., None]
        # component-major layouts: basis (C, L, Q), states (C, 5, Q)
        th = _cm(monomial_values(np.concatenate([(x - cc0) / hh, sfrac], axis=-1), N))
        thw = th * w[:, None, :]
        M = thw @ _bt(th)
        xs, ws = vq.slice_nodes(ids, 0)
        ph = _cm(monomial_values((xs - cc0) / hh, N))
        Mn[ids] = (ph * ws[:, None, :]) @ _bt(ph)
        xs, ws = vq.slice_nodes(ids, 1)
        ph = _cm(monomial_values((xs - cc1) / hh, N))
        Mn1[ids] = (ph * ws[:, None, :]) @ _bt(ph)
        K1 = M @ D4[3] / dt
        K1[:, :L3, :L3] += Mn[ids]
        rhs0 = np.zeros((C, L4, NVAR))
        rhs0[:, :L3] = Mn[ids] @ uhat[ids]
        A0 = np.linalg.solve(K1, rhs0)
        Minv = np.linalg.inv(M)
        # G_j = K1^-1 Kx_j M^-1 with Kx_j = M D_j / h
        G = np.stack([np.linalg.solve(K1, M @ D4[j] @ Minv) for j in range(3)], axis=1)
        G /= hscale[ids][:, None, None, None]
        valid = w != 0.0
        thwT = _bt(thw)
        q = np.zeros((C, L4, NVAR))
        q[:, :L3] = uhat[ids]
        for it in range(cfg.picard_iterations):
            qn = _bt(q) @ th
            F = _flux_cm(qn, gas.gamma)
            b = (F @ thwT).reshape(C, NVAR, 3, L4)
            new = A0 - np.einsum("cjkl,cvjl->ckv", G, b)
            diff = np.abs(new - q).max()
            q = new
            if diff <= tol:
                break
        picard_max = max(picard_max, it + 1)
        qhat[ids] = q
        qn = _bt(q) @ th
        rho = qn[:, 0][valid]
        if np.any(~(rho > 0)) or np.any(~(_pressure_cm(qn, gas.gamma)[valid] > 0)):
            raise StateError("predictor produced a non-physical state")
        F = _flux_cm(qn, gas.gamma).reshape(C, NVAR, 3, -1)
        # corrector volume term through psi values: d_j psi = psi D3_j / h,
        # d_t psi = -cdot . grad psi
        cdot = (c1[ids] - c0[ids]) / dt
        ps = _cm(monomial_values((x - (cc0 + sfrac * (cc1 - cc0))) / hh, N))
        psw = ps * w[:, None, :]
        Vc = np.zeros((C, L3, NVAR))
        for j in range(3):
            Pj = psw @ _bt(F[:, :, j] - cdot[:, j, None, None] * qn)
            Vc += _bt(D3[j]) @ Pj
        V[ids] = Vc / hh

    # hole elements
    centers = np.zeros((NV, 3))
    scales = np.zeros(NV)
    centers[:NP] = c0
    scales[:NP] = hscale
    for h in geo.holes:
        centers[h.index] = h.center
        scales[h.index] = h.h
    rule = reference_quadrature("prism_boosted" if cfg.boosted else "prism", N)
    hole_facets = np.nonzero(geo.nbr >= NP)[0]
    if len(hole_facets) and np.any(geo.owner[hole_facets] >= NP):
        raise TopologyError("hole adjacent to another hole")
    newton_its, newton_res = 0, 0.0
    if geo.holes:
        meas = geo.measures(N)
        x, t, wN = facet_nodes(geo, rule, hole_facets)
        o = geo.owner[hole_facets]
        tho = theta_values(centers[o][:, None, :], scales[o][:, None, None], t0, dt, N, x, t)
        q_cell = tho @ qhat[o]
        for h in geo.holes:
            sel = geo.nbr[hole_facets] == h.index
            xh, th_ = x[sel].reshape(-1, 3), np.broadcast_to(t, x[sel].shape[:-1]).ravel()
            th_s = theta_values(h.center, h.h, t0, dt, N, xh, th_)
            xv, tv, wv = vq.nodes([h.index])
            xv, tv, wv = xv[0], tv[0], wv[0]
            keep = wv != 0.0
            xv, tv, wv = xv[keep], tv[keep], wv[keep]
            th_v, tht_v, thg_v = eval_theta(h.center, h.h, t0, dt, N, xv, tv)
            qc = q_cell[sel].reshape(-1, NVAR)
            wn = wN[sel].reshape(-1, 4)
            scale = float(np.linalg.norm(wn, axis=1).sum() * np.abs(qc).max()) + 1e-300
            hs = HoleSystem(h.index, th_s, qc, wn, th_v, tht_v, thg_v, wv, scale)
            if report.hole_systems is not None:
                report.hole_systems.append(hs)
            # measure-weighted L2 re-expansion of the neighbor predictors
            aw = np.abs(wv)
            Mh = (th_v * aw[:, None]).T @ th_v
            acc = np.zeros((L4, NVAR))
            wsum = 0.0
            for j in h.neighbors:
                if j >= NP:
                    continue
                tj = theta_values(c0[j], hscale[j], t0, dt, N, xv, tv)
                acc += meas[j] * ((th_v * aw[:, None]).T @ (tj @ qhat[j]))
                wsum += meas[j]
            guess = np.linalg.solve(Mh, acc / wsum)
            if not _admissible(guess, hs, gas):
                guess = np.zeros((L4, NVAR))
                guess[0] = np.average(qc, axis=0, weights=np.linalg.norm(wn, axis=1) + 1e-300)
            qh, its, res = solve_hole(hs, guess, cfg)
            qhat[h.index] = qh
            newton_its = max(newton_its, its)
            newton_res = max(newton_res, res / hs.scale)

    # surface fluxes
    S = np.zeros((NP, L3, NVAR))
    for s in range(0, len(geo.owner), cfg.facet_chunk):
        fids = np.arange(s, min(len(geo.owner), s + cfg.facet_chunk))
        x, t, wN = facet_nodes(geo, rule, fids)
        o = geo.owner[fids]
        b = geo.nbr[fids]
        tt = np.broadcast_to(t, x.shape[:-1])
        tho = theta_values(centers[o][:, None, :], scales[o][:, None, None], t0, dt, N, x, tt)
        qo = tho @ qhat[o]
        qb = np.empty_like(qo)
        inner = b >= 0
        if inner.any():
            bi = b[inner]
            thb = theta_values(centers[bi][:, None, :], scales[bi][:, None, None], t0, dt, N,
                               x[inner], tt[inner])
            qb[inner] = thb @ qhat[bi]
        wall = ~inner
        if wall.any():
            nrm = np.array([_wall_normal(geo, int(-1 - k)) for k in b[wall]])
            m = qo[wall][..., 1:4]
            mn = np.einsum("fqk,fk->fq", m, nrm)
            g = qo[wall].copy()
            g[..., 1:4] = m - 2.0 * mn[..., None] * nrm[:, None, :]
            qb[wall] = g
        smooth = b >= NP
        Fl = np.empty_like(qo)
        if (~smooth).any():
            Fl[~smooth] = rusanov_raw(qo[~smooth], qb[~smooth], wN[~smooth], gas)
        if smooth.any():
            Fl[smooth] = rusanov_raw(qo[smooth], qb[smooth], wN[smooth], gas, smooth=True,
                                     sharpness=cfg.sharpness)
        po = psi_values(c0[o][:, None, :], c1[o][:, None, :], hscale[o][:, None, None],
                        t0, dt, N, x, tt)
        S += _sparse_sum(o, _bt(po) @ Fl, NP)
        cb = (b >= 0) & (b < NP)
        if cb.any():
            bc = b[cb]
            pb = psi_values(c0[bc][:, None, :], c1[bc][:, None, :], hscale[bc][:, None, None],
                            t0, dt, N, x[cb], tt[cb])
            S -= _sparse_sum(bc, _bt(pb) @ Fl[cb], NP)

    rhs = Mn @ uhat + V - S
    unew = np.linalg.solve(Mn1, rhs)
    report.picard_iterations = picard_max
    report.newton_iterations = newton_its
    report.newton_residual = newton_res
    report.holes = len(geo.holes)
    report.mass_before = np.einsum("cl,clv->v", Mn[:, 0], uhat)
    report.mass_after = np.einsum("cl,clv->v", Mn1[:, 0], unew)
    return unew, qhat, report


def _wall_normal(geo, w):
    return geo.dual0.generators.box.wall_normal(w)


# --------------------------------------------------------------------------
# full step with mesh motion

def move_generators(state, cfg, dt):
    """Candidate generator positions at t + dt and the blending factor used."""
    gens = state.gens
    P = gens.positions
    NP = len(P)
    if cfg.motion == "static":
        return P.copy(), 0.0
    if cfg.motion == "lagrangian":
        fld = PolynomialVelocity(state.uhat, state.centers, state.hscale, cfg.N)
        if cfg.damping is not None:
            fld = DampedVelocity(fld, cfg.damping)
    else:
        fld = cfg.velocity
    cells = np.arange(NP)
    if hasattr(fld, "advance"):
        # analytic trajectories bypass the Taylor expansion
        hat = gens.box.project(fld.advance(P, dt), gens.flags)
    else:
        hat = gens.box.project(taylor_advance(P, fld, dt, cells), gens.flags)
    if not cfg.smoothing:
        return hat, 0.0
    speed = np.linalg.norm(fld.derivatives(P, cells)[0], axis=1).max()
    if speed <= 0.0:
        return hat, 0.0
    star, _ = smoothed_positions(state.mesh, hat)
    star = gens.box.project(star, gens.flags)
    mu = compute_mu(speed, dt, float(state.dual.h.min()), cfg.kappa)
    return blend(hat, star, mu), mu


@dataclass
class StepResult:
    state: DGState
    dt: float
    mu: float
    events: list
    report: StepReport
    geo: object
    retries: int = 0
    worst_alpha: float = 1.0


def advance_one_step(state, cfg, dt=None, forced_mesh=None):
    """Advance state by one time step; the state is only replaced on success.

    forced_mesh: connectivity at t^{n+1} (generators stay put), used to
    impose a given flip.  Geometry or state failures are retried with half
    the time step.
    """
    if dt is None:
        dt = cfg.dt_fixed if cfg.dt_fixed is not None else compute_dt(state, cfg)
    err = None
    for attempt in range(cfg.max_retries + 1):
        try:
            res = _try_step(state, cfg, dt, forced_mesh)
            res.retries = attempt
            return res
        except (GeometryError, StateError, HoleSolveError, TopologyError, np.linalg.LinAlgError) as e:
            err = e
            if forced_mesh is not None:
                break
            dt *= 0.5
    raise GeometryError(f"step failed after {cfg.max_retries + 1} attempts: {err}") from err


def _try_step(state, cfg, dt, forced_mesh):
    gens = state.gens
    if forced_mesh is not None:
        P1, mu = gens.positions.copy(), 0.0
        mesh1 = forced_mesh
        events = diff_meshes(state.mesh, mesh1)
        pending = []
        worst = 1.0
    else:
        P1, mu = move_generators(state, cfg, dt)
        if cfg.flips:
            mesh1, events, pending, opt = optimize_step(state.mesh, P1, state.pending, cfg.flip_config)
            worst = opt.worst_alpha_after
        else:
            mesh1, events, pending, worst = state.mesh, [], [], 1.0
    if np.any(tet_volumes(P1, mesh1.tets) <= 0.0):
        raise GeometryError("tetrahedralization inverted at t^{n+1}")
    gens1 = gens.moved(P1)
    d1 = build_dual(mesh1, gens1)
    geo = build_spacetime(state.dual, d1, events, state.t, dt)
    unew, _, rep = space_time_update(geo, state.uhat, state.hscale, cfg)
    if np.any(~np.isfinite(unew)):
        raise StateError("non-finite coefficients")
    new = DGState(state.t + dt, gens1, mesh1, d1, unew, state.hscale, state.step + 1, pending)
    return StepResult(new, dt, mu, events, rep, geo, worst_alpha=worst)


# --------------------------------------------------------------------------
# diagnostics

DIAG_FIELDS = ("step", "t", "dt", "mu", "holes", "holes_32", "holes_23", "holes_44",
               "picard_iterations", "newton_iterations", "newton_residual",
               "mass", "momentum_x", "momentum_y", "momentum_z", "energy", "mass_change",
               "closure_residual", "worst_alpha", "retries")


def diagnostics_row(res, closure=True):
    """One CSV row of per-step diagnostics; the closure residual is the largest
    4D normal integral over the closed boundary of any space-time volume."""
    r = res.report
    kinds = [h.kind for h in res.geo.holes]
    tot = r.mass_after
    row = {
        "step": res.state.step, "t": res.state.t, "dt": res.dt, "mu": res.mu,
        "holes": r.holes, "holes_32": kinds.count("32"), "holes_23": kinds.count("23"),
        "holes_44": kinds.count("44"), "picard_iterations": r.picard_iterations,
        "newton_iterations": r.newton_iterations, "newton_residual": r.newton_residual,
        "mass": float(tot[0]), "momentum_x": float(tot[1]), "momentum_y": float(tot[2]),
        "momentum_z": float(tot[3]), "energy": float(tot[4]),
        "mass_change": float(tot[0] - r.mass_before[0]),
        "worst_alpha": res.worst_alpha, "retries": res.retries,
    }
    if closure:
        row["closure_residual"] = float(np.abs(res.geo.normal_closure(1)).max())
    return row


def write_diagnostics(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DIAG_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in DIAG_FIELDS})
