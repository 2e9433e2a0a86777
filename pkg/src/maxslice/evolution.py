"""Reduced hyperbolic-elliptic system and its time integration.

Unknowns are g, k and v = e0 k = Phi^-1 d_t k.  The system is

    d_t g = -2 Phi k
    d_t k = Phi v
    d_t v = Phi (Delta_g k + W(g, k, v, Phi, d_t Phi)) + S_v
    Delta_g Phi - |k|^2 Phi = S_Phi,  Phi = 1 on both faces,

where W is the full right-hand side of the wave equation for k.  S_v and
S_Phi vanish except for manufactured-solution runs.  d_t Phi is obtained by
solving the time-differentiated lapse equation (same operator, zero face
values), so W uses no time differencing.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import math
from typing import Callable, Iterator, Protocol

import numpy as np

from .boundary import BoundaryData, apply_bc
from .geometry import (MetricGeometry, contracted_second_partials,
                       covariant_kernel, dt_christoffel_kernel, laplace_tensor_kernel, geometry_from_jets,
                       hessian_kernel, inverse3, raise_both)
from .grid import (Grid, SymTensorField, as_full, einsum, extrapolate_ghosts, gradient,
                   hessian_partials, integrate_volume)
from .lapse import EllipticConfig, solve_dirichlet

log = logging.getLogger(__name__)


class EvolutionError(RuntimeError):
    """NaN, degenerate metric or lapse, or an invalid step size."""


class PicardError(RuntimeError):
    """The Picard iteration stopped contracting."""


_es = einsum


# ---------------------------------------------------------------------------
# state and configuration


@dataclass
class State:
    t: float
    g: SymTensorField
    k: SymTensorField
    v: SymTensorField
    phi: np.ndarray
    phidot: np.ndarray | None = None

    def copy(self) -> State:
        return State(self.t, self.g.copy(), self.k.copy(), self.v.copy(), self.phi.copy(),
                     None if self.phidot is None else self.phidot.copy())

    def arrays(self):
        return self.g.full(), self.k.full(), self.v.full()


@dataclass
class EvolveConfig:
    t_final: float = 1.0
    cfl: float = 0.25
    diagnostics_cadence: int = 1
    mode: str = "evolve"
    picard_tol: float = 1e-10
    picard_max_iter: int = 30
    max_steps: int | None = None

    MODES = ("evolve", "picard", "mms", "trace-check", "compat-check", "convergence-suite")

    def validate(self) -> None:
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.diagnostics_cadence < 1:
            raise ValueError("diagnostics_cadence must be >= 1")
        if self.mode not in self.MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.picard_tol > 0 or self.picard_max_iter < 1:
            raise ValueError("picard_tol must be positive and picard_max_iter >= 1")


class Sources(Protocol):
    """Manufactured-solution forcing; all methods return grid arrays."""

    def lapse(self, t: float) -> np.ndarray: ...
    def lapse_rate(self, t: float) -> np.ndarray: ...
    def wave(self, t: float) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# pointwise kernels


@dataclass
class Jets:
    """Fields and the partial derivatives the reduced system needs.

    ``lap_k`` is g^{ab} d_a d_b k_ij (partials only).  ``phidot`` and its
    derivatives may be None when only the lapse-rate source is wanted.
    """
    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    k: np.ndarray
    dk: np.ndarray
    lap_k: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    phidot: np.ndarray | None = None
    dphidot: np.ndarray | None = None
    ddphidot: np.ndarray | None = None


@dataclass
class KQuantities:
    """Algebraic and first-derivative quantities built from k."""
    ginv: np.ndarray
    kup: np.ndarray        # k^{ij}
    trk: np.ndarray
    k2: np.ndarray         # |k|^2
    kk: np.ndarray         # k_i^l k_jl
    cov: np.ndarray        # nabla_c k_ab, [c, a, b]
    dtrk: np.ndarray       # nabla_i tr k
    divk: np.ndarray       # nabla^a k_ai

    @classmethod
    def build(cls, geom: MetricGeometry, k: np.ndarray, dk: np.ndarray) -> KQuantities:
        ginv = geom.ginv
        kup = raise_both(ginv, k)
        trk = _es("ab...,ab...->...", ginv, k)
        k2 = _es("ab...,ab...->...", kup, k)
        kk = _es("ia...,ab...,jb...->ij...", k, ginv, k)
        cov = covariant_kernel(geom.gamma, k, dk)
        dtrk = _es("ab...,cab...->c...", ginv, cov)
        divk = _es("ab...,bia...->i...", ginv, cov)
        return cls(ginv, kup, trk, k2, kk, cov, dtrk, divk)


def lapk_covariant(geom: MetricGeometry, J: Jets) -> np.ndarray:
    return laplace_tensor_kernel(geom.ginv, geom.gamma, geom.dgamma, J.k, J.dk, J.lap_k)


def e0_quadratic(kq: KQuantities, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """e0(k_ij tr k - 2 k_i^l k_jl) with e0 g^{ij} = 2 k^{ij} and e0 k = v."""
    ginv = kq.ginv
    e0trk = 2.0 * kq.k2 + _es("ab...,ab...->...", ginv, v)
    e0kk = (_es("ia...,ab...,jb...->ij...", v, ginv, k)
            + 2.0 * _es("ia...,ab...,jb...->ij...", k, kq.kup, k)
            + _es("ia...,ab...,jb...->ij...", k, ginv, v))
    return v * kq.trk + k * e0trk - 2.0 * e0kk


def wave_rhs_kernel(J: Jets, geom: MetricGeometry, kq: KQuantities | None = None) -> np.ndarray:
    """Right-hand side W_ij of e0^2 k_ij - Delta_g k_ij = W_ij (all seven lines)."""
    g, k, phi = J.g, J.k, J.phi
    ginv, gamma = geom.ginv, geom.gamma
    kq = kq or KQuantities.build(geom, k, J.dk)
    ip = 1.0 / phi
    hphi = hessian_kernel(gamma, J.dphi, J.ddphi)
    lphi = _es("ab...,ab...->...", ginv, hphi)
    hpd = hessian_kernel(gamma, J.dphidot, J.ddphidot)
    dtgam = dt_christoffel_kernel(ginv, gamma, k, J.dk, phi, J.dphi)
    dphi_up = _es("ab...,b...->a...", ginv, J.dphi)
    kmix = _es("ia...,ab...->ib...", k, ginv)          # k_i^b
    cov = kq.cov

    w = ip ** 3 * J.phidot * hphi - ip ** 2 * hpd
    w += ip ** 2 * _es("lij...,l...->ij...", dtgam, J.dphi)
    w += e0_quadratic(kq, k, J.v)
    kh = _es("ia...,aj...->ij...", kmix, hphi)
    w += ip * (k * lphi - kh - np.swapaxes(kh, 0, 1))
    grad_terms = _grad_block(cov, dphi_up)
    w -= ip * grad_terms
    w += ip * kq.trk * hphi
    m = kq.dtrk - kq.divk
    a = _es("j...,i...->ij...", J.dphi, m)
    w += ip * (a + np.swapaxes(a, 0, 1))
    ric, rs = geom.ricci, geom.scalar
    rmix = _es("ja...,ac...->jc...", ric, ginv)        # R_j^c
    kr = _es("ci...,jc...->ij...", k, rmix)            # k_ci R_j^c
    w += -3.0 * (kr + np.swapaxes(kr, 0, 1)) + 2.0 * kq.trk * ric
    w += 2.0 * g * _es("ad...,dc...,cb...,ba...->...", ric, ginv, k, ginv)
    w += (k - g * kq.trk) * rs
    return w


def _grad_block(cov: np.ndarray, dphi_up: np.ndarray) -> np.ndarray:
    """nabla^a Phi (nabla_j k_ia + nabla_i k_ja - 2 nabla_a k_ij)."""
    t1 = _es("a...,jia...->ij...", dphi_up, cov)
    t3 = _es("a...,aij...->ij...", dphi_up, cov)
    return t1 + np.swapaxes(t1, 0, 1) - 2.0 * t3


def second_variation_kernel(geom: MetricGeometry, J: Jets, kq: KQuantities) -> np.ndarray:
    """-nabla_i nabla_j Phi + Phi (R_ij + k_ij tr k - 2 k_i^l k_jl)."""
    hphi = hessian_kernel(geom.gamma, J.dphi, J.ddphi)
    return -hphi + J.phi * (geom.ricci + J.k * kq.trk - 2.0 * kq.kk)


def lapse_rate_rhs_kernel(geom: MetricGeometry, J: Jets, kq: KQuantities) -> np.ndarray:
    """Right side of Delta_g dPhi - |k|^2 dPhi = ... (without d_t S_Phi).

    Phi d_t|k|^2 - 2 Phi k^{ab} nabla_a nabla_b Phi + g^{ab} d_t Gamma^c_ab d_c Phi,
    with d_t|k|^2 = Phi (4 tr k^3 + 2 k^{ij} v_ij).
    """
    ginv, phi = geom.ginv, J.phi
    trk3 = _es("ab...,bc...,ca...->...", kq.kup, J.k, _mixed(ginv, J.k))
    dk2 = phi * (4.0 * trk3 + 2.0 * _es("ab...,ab...->...", kq.kup, J.v))
    hphi = hessian_kernel(geom.gamma, J.dphi, J.ddphi)
    dtgam = dt_christoffel_kernel(ginv, geom.gamma, J.k, J.dk, phi, J.dphi)
    return (phi * dk2 - 2.0 * phi * _es("ab...,ab...->...", kq.kup, hphi)
            + _es("ab...,cab...,c...->...", ginv, dtgam, J.dphi))


def _mixed(ginv, k):
    """k^a_b = g^{ac} k_cb with index order [a, b]."""
    return _es("ac...,cb...->ab...", ginv, k)


# ---------------------------------------------------------------------------
# grid-level assembly


def fd_jets(grid: Grid, g: np.ndarray, k: np.ndarray, v: np.ndarray, phi: np.ndarray,
            phidot: np.ndarray | None = None, ginv: np.ndarray | None = None) -> Jets:
    """Finite-difference jets; all ghosts must be filled (checked lazily)."""
    if ginv is None:
        ginv, _ = inverse3(g, check=False)
    J = Jets(g, gradient(grid, g, False), hessian_partials(grid, g, False),
             k, gradient(grid, k, False), contracted_second_partials(grid, ginv, k),
             v, phi, gradient(grid, phi, False), hessian_partials(grid, phi, False))
    if phidot is not None:
        J.phidot = phidot
        J.dphidot = gradient(grid, phidot, False)
        J.ddphidot = hessian_partials(grid, phidot, False)
    return J


def _finite_nodes(grid: Grid, name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a[..., grid.nodes])):
        raise EvolutionError(f"non-finite values in {name}")


def solve_lapse_rate(grid: Grid, geom: MetricGeometry, J: Jets, kq: KQuantities,
                     cfg: EllipticConfig | None = None, source_rate: np.ndarray | None = None,
                     guess: np.ndarray | None = None) -> np.ndarray:
    """d_t Phi from the time-differentiated lapse equation, zero on the faces."""
    rhs = lapse_rate_rhs_kernel(geom, J, kq)
    if source_rate is not None:
        rhs = rhs + source_rate
    out = solve_dirichlet(grid, J.g, np.maximum(kq.k2, 0.0), rhs, 0.0, cfg, guess)
    return extrapolate_ghosts(grid, out, 3)


def initial_kdot(grid: Grid, g, k, phi: np.ndarray) -> np.ndarray:
    """v = Phi^-1 (-nabla nabla Phi + Phi (R_ij + k tr k - 2 k k)); ghosts must be filled."""
    g, k = as_full(g), as_full(k)
    phi = np.asarray(phi)
    if not np.all(np.isfinite(phi)):
        phi = extrapolate_ghosts(grid, phi.copy(), 3)
    J = fd_jets(grid, g, k, np.zeros_like(k), phi)
    geom = geometry_from_jets(g, J.dg, J.ddg, check=False)
    kq = KQuantities.build(geom, k, J.dk)
    return second_variation_kernel(geom, J, kq) / phi


@dataclass
class StageResult:
    dg: np.ndarray
    dk: np.ndarray
    dv: np.ndarray
    phi: np.ndarray
    phidot: np.ndarray


class System:
    """The reduced system on one grid with its boundary data and optional sources."""

    def __init__(self, grid: Grid, bdata: BoundaryData, elliptic: EllipticConfig | None = None,
                 sources: Sources | None = None):
        self.grid = grid
        self.bdata = bdata
        self.elliptic = elliptic or EllipticConfig()
        self.sources = sources

    # -- pieces ---------------------------------------------------------
    def prepare(self, t: float, g: np.ndarray, k: np.ndarray, v: np.ndarray,
                phi_guess: np.ndarray | None = None, phidot_guess: np.ndarray | None = None):
        """Enforce BCs in place, solve Phi and d_t Phi; returns (phi, phidot, J, geom, kq)."""
        grid = self.grid
        ones = grid.empty()
        ones[..., grid.nodes] = 1.0
        apply_bc(grid, g, k, v, ones, t, self.bdata)
        for name, a in (("g", g), ("k", k), ("v", v)):
            _finite_nodes(grid, name, a)
        src = self.sources
        ginv, _ = inverse3(g)
        k2 = np.maximum(_es("ia...,jb...,ij...,ab...->...", ginv, ginv, k, k), 0.0)
        phi = solve_dirichlet(grid, g, k2, None if src is None else src.lapse(t),
                              1.0, self.elliptic, phi_guess)
        extrapolate_ghosts(grid, phi, 3)
        pn = phi[..., grid.nodes]
        if np.any(pn <= 0):
            raise EvolutionError("lapse is not positive")
        J = fd_jets(grid, g, k, v, phi, ginv=ginv)
        geom = geometry_from_jets(g, J.dg, J.ddg, check=False)
        kq = KQuantities.build(geom, k, J.dk)
        phidot = solve_lapse_rate(grid, geom, J, kq, self.elliptic,
                                  None if src is None else src.lapse_rate(t), phidot_guess)
        J.phidot = phidot
        J.dphidot = gradient(grid, phidot, False)
        J.ddphidot = hessian_partials(grid, phidot, False)
        return phi, phidot, J, geom, kq

    def rates(self, t, J: Jets, geom: MetricGeometry, kq: KQuantities) -> tuple:
        w = wave_rhs_kernel(J, geom, kq)
        lap = lapk_covariant(geom, J)
        dv = J.phi * (lap + w)
        if self.sources is not None:
            dv = dv + self.sources.wave(t)
        return -2.0 * J.phi * J.k, J.phi * J.v, dv

    def stage(self, t, g, k, v, phi_guess=None, phidot_guess=None) -> StageResult:
        phi, phidot, J, geom, kq = self.prepare(t, g, k, v, phi_guess, phidot_guess)
        dg, dk, dv = self.rates(t, J, geom, kq)
        return StageResult(dg, dk, dv, phi, phidot)

    # -- state helpers ----------------------------------------------------
    def finalize(self, t: float, g, k, v, phi_guess=None, phidot_guess=None) -> State:
        g, k, v = (np.array(as_full(a), dtype=float) for a in (g, k, v))
        phi, phidot, *_ = self.prepare(t, g, k, v, phi_guess, phidot_guess)
        return State(t, SymTensorField.from_full(g), SymTensorField.from_full(k),
                     SymTensorField.from_full(v), phi, phidot)


def rhs_wave(system: System, state: State) -> np.ndarray:
    """Full wave right-hand side W at ``state`` (BCs and lapse re-established)."""
    g, k, v = state.arrays()
    _, _, J, geom, kq = system.prepare(state.t, g, k, v, state.phi, state.phidot)
    return wave_rhs_kernel(J, geom, kq)


# ---------------------------------------------------------------------------
# time stepping


def cfl_dt(grid: Grid, state: State, cfl: float) -> float:
    """cfl * h_min / max sqrt(lambda_max(Phi^2 g^ij))."""
    g = state.g.full()[..., grid.nodes]
    ginv, _ = inverse3(g)
    pts = np.moveaxis(ginv.reshape(3, 3, -1), -1, 0)
    lam = np.linalg.eigvalsh(pts)[:, -1]
    phi2 = state.phi[..., grid.nodes].reshape(-1) ** 2
    speed = math.sqrt(float(np.max(phi2 * lam)))
    return cfl * grid.h_min / speed


def _rk4_combine(y, ks, dt):
    return [y[i] + dt / 6.0 * (ks[0][i] + 2 * ks[1][i] + 2 * ks[2][i] + ks[3][i]) for i in range(3)]


def step(system: System, state: State, dt: float, record: list | None = None) -> State:
    """One classical RK4 step with BC fill and lapse solves at every stage.

    If ``record`` is a list, the four stage inputs (t, g, k, v, phi, phidot)
    are appended to it (used by the Picard solver).
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise EvolutionError(f"invalid time step {dt!r}")
    t0 = state.t
    y0 = [a.copy() for a in state.arrays()]
    guess, gdot = state.phi, state.phidot
    ks = []
    for s, c in enumerate((0.0, 0.5, 0.5, 1.0)):
        ys = y0 if s == 0 else [y0[i] + c * dt * ks[-1][i] for i in range(3)]
        ys = [a.copy() for a in ys]
        r = system.stage(t0 + c * dt, *ys, guess, gdot)
        guess, gdot = r.phi, r.phidot
        if record is not None:
            record.append((t0 + c * dt, ys[0], ys[1], ys[2], r.phi, r.phidot))
        ks.append((r.dg, r.dk, r.dv))
    y1 = _rk4_combine([y0[0], y0[1], y0[2]], ks, dt)
    for name, a in zip(("g", "k", "v"), y1):
        _finite_nodes(system.grid, name, a)
    for a in y1:
        a[...] = 0.5 * (a + np.swapaxes(a, 0, 1))
    return system.finalize(t0 + dt, *y1, guess, gdot)


def initial_state(system: System, g, k, v=None, t: float = 0.0) -> State:
    """Slice (g, k) at time t with Phi solved and, unless given, v from the second variation."""
    g, k = np.array(as_full(g), dtype=float), np.array(as_full(k), dtype=float)
    if v is None:
        ones = system.grid.empty()
        ones[..., system.grid.nodes] = 1.0
        apply_bc(system.grid, g, k, None, ones, t, system.bdata)
        st = system.finalize(t, g, k, np.zeros_like(k))
        v = initial_kdot(system.grid, st.g.full(), st.k.full(), st.phi)
    return system.finalize(t, g, k, as_full(v))


def evolve(system: System, initial: State, cfg: EvolveConfig,
           callback: Callable[[int, State], None] | None = None) -> Iterator[State]:
    """Yield states at the diagnostics cadence, ending exactly at t_final."""
    cfg.validate()
    state = initial
    n = 0
    yield state
    while state.t < cfg.t_final - 1e-14 * max(1.0, cfg.t_final):
        dt = min(cfl_dt(system.grid, state, cfg.cfl), cfg.t_final - state.t)
        if cfg.max_steps is not None and n >= cfg.max_steps:
            break
        state = step(system, state, dt)
        n += 1
        if callback is not None:
            callback(n, state)
        if n % cfg.diagnostics_cadence == 0 or state.t >= cfg.t_final - 1e-14:
            yield state


def run_steps(system: System, initial: State, dt: float, nsteps: int) -> list[State]:
    out = [initial]
    for _ in range(nsteps):
        out.append(step(system, out[-1], dt))
    return out


def time_grid(system: System, initial: State, cfg: EvolveConfig) -> list[float]:
    """Step sizes used by evolve for a frozen CFL estimate (Picard needs a fixed grid)."""
    dt = cfl_dt(system.grid, initial, cfg.cfl)
    n = max(1, math.ceil(cfg.t_final / dt - 1e-12))
    return [cfg.t_final / n] * n


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class PicardResult:
    states: list[State]
    diffs: list[float]
    iterations: int
    converged: bool


class _FrozenSystem(System):
    """Linear system for iterate n+1 with coefficients from iterate n's stages."""

    def __init__(self, base: System, frozen: list):
        super().__init__(base.grid, base.bdata, base.elliptic, base.sources)
        self.frozen = frozen
        self.cursor = 0

    def stage(self, t, g, k, v, phi_guess=None, phidot_guess=None) -> StageResult:
        tf, gn, kn, vn, phin, phidotn = self.frozen[self.cursor]
        self.cursor += 1
        grid = self.grid
        gn = gn.copy()
        ones = grid.empty()
        ones[..., grid.nodes] = 1.0
        # BCs for the new iterate are written with the frozen metric
        apply_bc(grid, gn, k, v, ones, t, self.bdata)
        Jn = fd_jets(grid, gn, kn, vn, phin, phidotn)
        geom = geometry_from_jets(gn, Jn.dg, Jn.ddg, check=False)
        kq = KQuantities.build(geom, kn, Jn.dk)
        w = wave_rhs_kernel(Jn, geom, kq)
        Jnew = replace(Jn, k=k, dk=gradient(grid, k, False),
                       lap_k=contracted_second_partials(grid, geom.ginv, k), v=v)
        dv = phin * (lapk_covariant(geom, Jnew) + w)
        if self.sources is not None:
            dv = dv + self.sources.wave(t)
        # the lapse of iterate n+1 comes from the frozen slice
        k2 = np.maximum(kq.k2, 0.0)
        phi_new = solve_dirichlet(grid, gn, k2, None if self.sources is None
                                  else self.sources.lapse(t), 1.0, self.elliptic, phin)
        return StageResult(-2.0 * phin * kn, phin * v, dv, phi_new, phidotn)


def _frozen_initial(initial: State, nstages: int) -> list:
    g, k, v = initial.arrays()
    zero = np.zeros_like(initial.phi)
    zero[~np.isfinite(initial.phi)] = 0.0
    return [(initial.t, g, k, v, initial.phi, zero)] * nstages


def _picard_norm(grid: Grid, a: list[State], b: list[State]) -> float:
    out = 0.0
    flat = np.eye(3)[:, :, None, None, None] * np.ones(grid.shape)
    for sa, sb in zip(a, b):
        tot = 0.0
        for x, y in ((sa.k.full(), sb.k.full()), (sa.g.full(), sb.g.full())):
            d = (x - y)[..., grid.nodes]
            tot += integrate_volume(grid, _pad(grid, np.sum(d ** 2, axis=(0, 1))), flat)
        dp = (sa.phi - sb.phi)
        tot += integrate_volume(grid, np.where(np.isfinite(dp), dp, 0.0) ** 2, flat)
        out = max(out, math.sqrt(tot))
    return out


def _pad(grid: Grid, nodes: np.ndarray) -> np.ndarray:
    a = np.zeros(grid.shape)
    a[..., grid.nodes] = nodes
    return a


def picard_solve(system: System, initial: State, cfg: EvolveConfig,
                 dts: list[float] | None = None) -> PicardResult:
    """Picard iteration on the whole time interval with fixed step sizes."""
    cfg.validate()
    dts = dts or time_grid(system, initial, cfg)
    nst = 4 * len(dts)
    frozen = _frozen_initial(initial, nst)
    prev = [initial] * (len(dts) + 1)
    diffs: list[float] = []
    rising = 0
    for it in range(1, cfg.picard_max_iter + 1):
        fs = _FrozenSystem(system, frozen)
        record: list = []
        states = [initial]
        for dt in dts:
            st = step(fs, states[-1], dt, record)
            states.append(st)
        # the frozen data of the next iterate: the stage inputs just taken,
        # with Phi and d_t Phi recomputed from them as nonlinear coefficients
        new_frozen = []
        for (t, g, k, v, _phi, _pd) in record:
            gg, kk, vv = g.copy(), k.copy(), v.copy()
            phi, phidot, *_ = system.prepare(t, gg, kk, vv)
            new_frozen.append((t, gg, kk, vv, phi, phidot))
        d = _picard_norm(system.grid, states, prev)
        diffs.append(d)
        log.info("picard iterate %d: difference %.3e", it, d)
        if len(diffs) > 1 and diffs[-1] > diffs[-2]:
            rising += 1
            if rising >= 3:
                raise PicardError(f"Picard iteration is not contracting: {diffs}")
        else:
            rising = 0
        prev, frozen = states, new_frozen
        if d < cfg.picard_tol:
            return PicardResult(states, diffs, it, True)
    return PicardResult(prev, diffs, cfg.picard_max_iter, False)
