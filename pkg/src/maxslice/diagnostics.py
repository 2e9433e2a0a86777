"""Monitored quantities: constraints, spacetime curvature from 3+1 pieces,
energies, identity residuals, boundary residuals and convergence rates.

Identities that rely on the lapse equation (the trace identity and the
Einstein-tensor propagation law) are evaluated on interior nodes only:
on the faces Phi is fixed by its Dirichlet value, not by the equation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
import math

import numpy as np

from .boundary import BoundaryData, bc_residuals, cbd_norm, frame_parts
from .evolution import (Jets, KQuantities, State, fd_jets, solve_lapse_rate,
                        wave_rhs_kernel)
from .geometry import (MetricGeometry, frame_project, geometry_from_jets, hessian_kernel,
                       inverse3, normal_frame)
from .grid import (Grid, as_full, d_tan, det3, einsum, extrapolate_ghosts, gradient,
                   hessian_partials, integrate_volume)
from .lapse import EllipticConfig, solve_dirichlet


_es = einsum


class DiagnosticsError(ValueError):
    """Not enough trajectory slices for a requested quantity."""


# ---------------------------------------------------------------------------
# norms


def l2(grid: Grid, f: np.ndarray, g=None, interior: bool = False) -> float:
    """sqrt of the trapezoid-weighted integral of f^2 over the nodes (flat weights
    unless g is given, then the metric volume form)."""
    f = np.asarray(f)[..., grid.nodes]
    w = grid.node_weights()
    if g is not None:
        w = w * np.sqrt(det3(as_full(g)[..., grid.nodes]))
    if interior:
        w = w.copy()
        w[..., 0] = w[..., -1] = 0.0
    sq = f ** 2
    while sq.ndim > 3:
        sq = sq.sum(axis=0)
    return math.sqrt(float(np.sum(sq * w)))


def tensor_norm2(ginv: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Pointwise |T|_g^2 for a covariant 1- or 2-tensor."""
    if t.ndim - ginv.ndim == -1:
        return _es("ab...,a...,b...->...", ginv, t, t)
    return _es("ia...,jb...,ij...,ab...->...", ginv, ginv, t, t)


def l2_tensor(grid: Grid, g, t: np.ndarray, interior: bool = False) -> float:
    ginv, _ = inverse3(as_full(g), check=False)
    return l2(grid, np.sqrt(np.maximum(tensor_norm2(ginv, t), 0.0)), g, interior)


# ---------------------------------------------------------------------------
# constraints and curvature


def _geom(grid: Grid, g, k, v=None, phi=None):
    g, k = as_full(g), as_full(k)
    v = np.zeros_like(k) if v is None else as_full(v)
    if phi is None:
        phi = np.ones(grid.shape)
    J = fd_jets(grid, g, k, v, phi)
    geom = geometry_from_jets(g, J.dg, J.ddg, check=False)
    return J, geom, KQuantities.build(geom, k, J.dk)


def hamiltonian(grid: Grid, g, k) -> np.ndarray:
    """R - |k|^2 + (tr k)^2."""
    _, geom, kq = _geom(grid, g, k)
    return geom.scalar - kq.k2 + kq.trk ** 2


def momentum(grid: Grid, g, k) -> np.ndarray:
    """d_i tr k - nabla^a k_ai, one row per component i."""
    _, _, kq = _geom(grid, g, k)
    return kq.dtrk - kq.divk


@dataclass
class SpacetimeRicci:
    rij: np.ndarray      # bold R_ij
    r00: np.ndarray      # bold R_00
    r0i: np.ndarray      # G_i = bold R_0i


def spacetime_ricci_kernel(J: Jets, geom: MetricGeometry, kq: KQuantities) -> SpacetimeRicci:
    phi = J.phi
    hphi = hessian_kernel(geom.gamma, J.dphi, J.ddphi)
    lphi = _es("ab...,ab...->...", geom.ginv, hphi)
    rij = -J.v - hphi / phi + geom.ricci + J.k * kq.trk - 2.0 * kq.kk
    e0trk = 2.0 * kq.k2 + _es("ab...,ab...->...", geom.ginv, J.v)
    r00 = e0trk + lphi / phi - kq.k2
    return SpacetimeRicci(rij, r00, kq.dtrk - kq.divk)


def spacetime_ricci(grid: Grid, g, k, v, phi) -> SpacetimeRicci:
    """Reconstruct bold R_ij, bold R_00 and G_i = bold R_0i from (g, k, v, Phi)."""
    J, geom, kq = _geom(grid, g, k, v, _filled(grid, phi))
    return spacetime_ricci_kernel(J, geom, kq)


@dataclass
class EinsteinParts:
    gij: np.ndarray      # G_ij
    G: np.ndarray        # g^{ab} G_ab (spacetime trace) = -bold R
    gtilde: np.ndarray   # G_i - 1/2 nabla_i tr k
    scalar: np.ndarray   # bold R


def einstein_tensor(ric: SpacetimeRicci, g, dtrk: np.ndarray | None = None) -> EinsteinParts:
    g = as_full(g)
    ginv, _ = inverse3(g, check=False)
    rs = _es("ab...,ab...->...", ginv, ric.rij) - ric.r00
    gij = ric.rij - 0.5 * g * rs
    gt = ric.r0i if dtrk is None else ric.r0i - 0.5 * dtrk
    return EinsteinParts(gij, -rs, gt, rs)


def _filled(grid: Grid, phi: np.ndarray) -> np.ndarray:
    if np.all(np.isfinite(phi)):
        return phi
    return extrapolate_ghosts(grid, np.array(phi, dtype=float), 3)


# ---------------------------------------------------------------------------
# energies


def _frame_blocks(g: np.ndarray, t: np.ndarray) -> dict:
    """Scalar frame fields: hat k_A^B (4), k_C^C, k_NA (2), k_NN."""
    frame = normal_frame(g)
    comp = frame_project(t, frame)
    hat, kcc = frame_parts(comp, frame)
    return {"hat": hat, "kcc": kcc, "kna": comp.k_na, "knn": comp.k_nn, "qinv": frame.qinv}


def _grad2(grid: Grid, ginv: np.ndarray, u: np.ndarray) -> np.ndarray:
    du = gradient(grid, u, check=False)
    return _es("ij...,i...,j...->...", ginv, du, du)


def _energy_density(grid: Grid, g: np.ndarray, k: np.ndarray, e0k: np.ndarray) -> np.ndarray:
    ginv, _ = inverse3(g, check=False)
    kb, vb = _frame_blocks(g, k), _frame_blocks(g, e0k)
    dens = np.zeros(grid.shape)
    for a in range(2):
        for b in range(2):
            dens += vb["hat"][a, b] ** 2 + _grad2(grid, ginv, kb["hat"][a, b])
    dens += vb["kcc"] ** 2 + _grad2(grid, ginv, kb["kcc"])
    dens += vb["knn"] ** 2 + _grad2(grid, ginv, kb["knn"])
    qi = kb["qinv"]
    dna = gradient(grid, kb["kna"], check=False)          # [c, A]
    dens += 4.0 * (_es("ab...,a...,b...->...", qi, vb["kna"], vb["kna"])
                   + _es("ab...,ij...,ia...,jb...->...", qi, ginv, dna, dna))
    return dens


def _tan_shift(grid: Grid, u: np.ndarray, direction: int) -> np.ndarray:
    return d_tan(grid, u, direction)


def energy_k(grid: Grid, states: list[State], r: int = 0) -> float:
    """E_k at the last state; r = 1 adds one tangential and one time derivative.

    The boundary-data extension is not materialised (its contribution is
    carried by c_bd), so hat k enters directly.  e0 of frame components is
    taken as the frame projection of v.
    """
    if r not in (0, 1):
        raise ValueError("r must be 0 or 1")
    if r == 1 and len(states) < 2:
        raise DiagnosticsError("r = 1 energy needs at least two stored slices")
    st = states[-1]
    g, k, v = st.arrays()
    g = np.nan_to_num(g, nan=0.0) + np.where(np.isfinite(g), 0.0, np.eye(3)[:, :, None, None, None])
    dens = _energy_density(grid, g, k, v)
    if r == 1:
        for d in (1, 2):
            dens = dens + _energy_density(grid, g, _tan_shift(grid, k, d), _tan_shift(grid, v, d))
        prev = states[-2]
        dt = st.t - prev.t
        if dt <= 0:
            raise DiagnosticsError("slices must be ordered in time")
        gp, kp, vp = prev.arrays()
        dens = dens + _energy_density(grid, g, (k - kp) / dt, (v - vp) / dt)
    return _integrate(grid, dens, g)


def _integrate(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return integrate_volume(grid, f, g)


def _normal_derivative(grid: Grid, frame_nup: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = _es("i...,i...->...", frame_nup, gradient(grid, u, check=False))
    out = np.array(out)
    out[..., :grid.ghost] = np.nan
    out[..., -grid.ghost:] = np.nan
    return extrapolate_ghosts(grid, out, 3)


def sobolev2(grid: Grid, g: np.ndarray, u: np.ndarray, order: int) -> float:
    """sum_{r1 + r2 <= order} int (N^r2 d^r1 u)^2 vol."""
    frame = normal_frame(g)
    total = 0.0
    tan = [u]
    for r1 in range(order + 1):
        for w in tan:
            cur = w
            for r2 in range(order - r1 + 1):
                total += _integrate(grid, cur ** 2, g)
                if r2 < order - r1:
                    cur = _normal_derivative(grid, frame.n_up, cur)
        tan = [d_tan(grid, x, 1) for x in tan] + [d_tan(grid, tan[-1], 2)]
    return total


def energy_total(grid: Grid, states: list[State], r: int = 0) -> float:
    """E_k plus Sobolev norms of (g - delta), (Phi - 1) and the lapse rates."""
    st = states[-1]
    g = st.g.full()
    total = energy_k(grid, states, r)
    eye = np.eye(3)[:, :, None, None, None]
    for i in range(3):
        for j in range(3):
            total += sobolev2(grid, g, (g - eye)[i, j], r + 1)
    phi = _filled(grid, st.phi)
    total += sobolev2(grid, g, phi - 1.0, r + 2)
    if st.phidot is not None:
        total += sobolev2(grid, g, _filled(grid, st.phidot), r + 1)
        if r == 1 and len(states) >= 2 and states[-2].phidot is not None:
            dt = st.t - states[-2].t
            pdd = (_filled(grid, st.phidot) - _filled(grid, states[-2].phidot)) / dt
            total += sobolev2(grid, g, pdd, r)
    return total


# ---------------------------------------------------------------------------
# identity checks


def analytic_state(grid: Grid, seed: int = 0, amp_g: float = 0.1, amp_k: float = 0.3):
    """Seeded smooth (g, k, v) with one tangential mode per direction and
    ghosts filled analytically.  Not a solution of anything; used to test
    identities that hold pointwise for arbitrary slices."""
    x1, x2, x3 = grid.mesh()
    rng = np.random.default_rng(seed)
    w = 2.0 * math.pi / grid.spec.period

    def mode(a):
        p = rng.uniform(0.0, 6.0, 3)
        return a * np.sin(w * x1 + p[0]) * np.cos(w * x2 + p[1]) * np.cos(1.3 * x3 + p[2])

    g = np.zeros((3, 3) + grid.shape)
    k, v = g.copy(), g.copy()
    for i in range(3):
        for j in range(i, 3):
            g[i, j] = g[j, i] = float(i == j) + mode(amp_g)
            k[i, j] = k[j, i] = mode(amp_k)
            v[i, j] = v[j, i] = mode(amp_k)
    return g, k, v


@dataclass
class TraceIdentity:
    lhs: np.ndarray
    rhs: np.ndarray
    residual: float


def trace_identity(grid: Grid, g, k, v, phi: np.ndarray | None = None,
                   elliptic: EllipticConfig | None = None,
                   lapse_source=None, lapse_rate_source=None) -> TraceIdentity:
    """Traced wave operator versus e0[(tr k)^2] + 4 Phi^-1 nabla^a Phi G_a.

    With W the assembled wave right-hand side,
        e0^2 tr k - Delta tr k = e0(2|k|^2) + 2 k^ij v_ij + g^ij W_ij,
    since e0 g^ij = 2 k^ij and Delta commutes with the trace.  Ghosts of
    g, k, v must be filled.  Phi is solved from the lapse equation unless
    given; d_t Phi always comes from the differentiated lapse equation.
    """
    g, k, v = as_full(g), as_full(k), as_full(v)
    ginv, _ = inverse3(g, check=False)
    if phi is None:
        k2 = np.maximum(_es("ia...,jb...,ij...,ab...->...", ginv, ginv, k, k), 0.0)
        phi = solve_dirichlet(grid, g, k2, lapse_source, 1.0, elliptic)
    phi = _filled(grid, phi)
    J = fd_jets(grid, g, k, v, phi, ginv=ginv)
    geom = geometry_from_jets(g, J.dg, J.ddg, check=False)
    kq = KQuantities.build(geom, k, J.dk)
    pd = solve_lapse_rate(grid, geom, J, kq, elliptic, lapse_rate_source)
    J.phidot, J.dphidot, J.ddphidot = pd, gradient(grid, pd, False), hessian_partials(grid, pd, False)
    w = wave_rhs_kernel(J, geom, kq)
    kv = _es("ab...,ab...->...", kq.kup, v)
    trk3 = _es("ab...,bc...,ca...->...", kq.kup, k, _es("ac...,cb...->ab...", ginv, k))
    lhs = 2.0 * (4.0 * trk3 + 2.0 * kv) + 2.0 * kv + _es("ab...,ab...->...", ginv, w)
    e0trk = 2.0 * kq.k2 + _es("ab...,ab...->...", ginv, v)
    gcal = kq.dtrk - kq.divk
    rhs = 2.0 * kq.trk * e0trk + 4.0 / phi * _es("ab...,a...,b...->...", ginv, J.dphi, gcal)
    return TraceIdentity(lhs, rhs, l2(grid, lhs - rhs, interior=True))


def trace_identity_check(grid: Grid, state_or_arrays, **kw) -> float:
    if isinstance(state_or_arrays, State):
        g, k, v = state_or_arrays.arrays()
        kw.setdefault("phi", state_or_arrays.phi)
    else:
        g, k, v = state_or_arrays
    return trace_identity(grid, g, k, v, **kw).residual


def _einstein_at(grid: Grid, st: State):
    g, k, v = st.arrays()
    J, geom, kq = _geom(grid, g, k, v, _filled(grid, st.phi))
    ric = spacetime_ricci_kernel(J, geom, kq)
    return J, geom, kq, ric, einstein_tensor(ric, g, kq.dtrk)


def _cov_covector(gamma: np.ndarray, w: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """nabla_i w_j, index order [i, j]."""
    return dw - _es("aij...,a...->ij...", gamma, w)


def propagation_check(grid: Grid, window: list[State]) -> float:
    """Centred e0 G_ij over three slices against the propagation law with G-tilde."""
    if len(window) < 3:
        raise DiagnosticsError("propagation_check needs three slices")
    s0, s1, s2 = window[-3:]
    G0 = _einstein_at(grid, s0)[4].gij
    G2 = _einstein_at(grid, s2)[4].gij
    J, geom, kq, ric, ein = _einstein_at(grid, s1)
    phi = J.phi
    e0G = (G2 - G0) / (s2.t - s0.t) / phi
    g, ginv = J.g, geom.ginv
    gt = ein.gtilde
    gt = np.array(gt)
    for a in gt:
        a[..., :grid.ghost] = np.nan
        a[..., -grid.ghost:] = np.nan
        extrapolate_ghosts(grid, a, 3)
    cgt = _cov_covector(geom.gamma, gt, gradient(grid, gt, check=False))
    div_gt = _es("ij...,ij...->...", ginv, cgt)
    trk = kq.trk
    ddtrk = hessian_kernel(geom.gamma, kq.dtrk, hessian_partials(grid, trk, False))
    lap_trk = _es("ij...,ij...->...", ginv, ddtrk)
    e0trk = 2.0 * kq.k2 + _es("ab...,ab...->...", ginv, J.v)
    dphi_up = _es("ab...,b...->a...", ginv, J.dphi)
    rs = ein.scalar
    rhs = (cgt + np.swapaxes(cgt, 0, 1) - g * div_gt + 0.5 * g * lap_trk + J.k * rs
           - g * _es("ab...,ab...->...", kq.kup, ric.rij)
           + 0.5 * g * (2.0 * trk * e0trk)
           + 2.0 * g * _es("a...,a...->...", dphi_up, gt) / phi
           + g * _es("a...,a...->...", dphi_up, kq.dtrk) / phi)
    return l2_tensor(grid, g, e0G - rhs, interior=True)


# ---------------------------------------------------------------------------
# records


@dataclass
class DiagnosticsRecord:
    t: float
    ham_norm: float
    mom_norm_1: float
    mom_norm_2: float
    mom_norm_3: float
    trk_l2: float
    trk_max: float
    ricci_ij_norm: float
    ricci_00_norm: float
    ricci_0i_norm: float
    einstein_norm: float
    gtilde_norm: float
    energy_k: float
    energy_total: float
    c_bd: float
    bc_khat: float
    bc_knn: float
    bc_kna: float
    bc_kcc: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list[float]:
        return list(asdict(self).values())


def compute_record(grid: Grid, states: list[State], bdata: BoundaryData, c_bd: float,
                   r: int = 0) -> DiagnosticsRecord:
    st = states[-1]
    g, k, v = st.arrays()
    J, geom, kq, ric, ein = _einstein_at(grid, st)
    ham = geom.scalar - kq.k2 + kq.trk ** 2
    mom = kq.dtrk - kq.divk
    bc = bc_residuals(grid, g, k, st.t, bdata)
    trk_nodes = kq.trk[..., grid.nodes]
    return DiagnosticsRecord(
        t=st.t,
        ham_norm=l2(grid, ham, g),
        mom_norm_1=l2(grid, mom[0], g), mom_norm_2=l2(grid, mom[1], g),
        mom_norm_3=l2(grid, mom[2], g),
        trk_l2=l2(grid, kq.trk, g), trk_max=float(np.max(np.abs(trk_nodes))),
        ricci_ij_norm=l2_tensor(grid, g, ric.rij),
        ricci_00_norm=l2(grid, ric.r00, g),
        ricci_0i_norm=l2_tensor(grid, g, ric.r0i),
        einstein_norm=l2_tensor(grid, g, ein.gij),
        gtilde_norm=l2_tensor(grid, g, ein.gtilde),
        energy_k=energy_k(grid, states[-2:] if r else states[-1:], r),
        energy_total=energy_total(grid, states[-2:] if r else states[-1:], r),
        c_bd=c_bd,
        bc_khat=bc["khat"], bc_knn=bc["knn"], bc_kna=bc["kna"], bc_kcc=bc["kcc"],
    )


# ---------------------------------------------------------------------------
# convergence tooling


@dataclass
class RateEstimate:
    rates: list[float]
    monotone: bool

    @property
    def rate(self) -> float:
        return self.rates[-1]


def convergence_rate(errors, ratio: float = 2.0) -> RateEstimate:
    """log_ratio of successive error quotients; flags a non-decreasing series."""
    e = [float(x) for x in errors]
    if len(e) < 2:
        raise ValueError("need at least two error values")
    rates = []
    for a, b in zip(e[:-1], e[1:]):
        rates.append(math.log(a / b) / math.log(ratio) if a > 0 and b > 0 else float("nan"))
    monotone = all(b < a for a, b in zip(e[:-1], e[1:]))
    return RateEstimate(rates, monotone)


def c_bd_for(grid: Grid, bdata: BoundaryData, r: int, t_final: float) -> float:
    return cbd_norm(grid, bdata, r, t_final)
