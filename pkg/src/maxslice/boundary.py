"""Boundary data from conformal families and ghost-layer enforcement of the BCs.

At each face the symmetric tensor k splits, in the adapted frame
(d_1, d_2, N), into

* Dirichlet part: the trace-free mixed block hat k_A^B and k_NN, the latter
  slaved to k_NN = trk_target - k_C^C (trk_target is 0 for vacuum runs);
* Neumann part: k_NA and k_C^C, whose face values are evolved.

Face values of the Dirichlet part are overwritten.  The first ghost layer
is filled so that, with centred normal differences, the three Neumann
conditions (momentum along d_A, the kCC combination) and the closure
N(tr k) = 0 hold exactly at every face node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from math import comb
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import (FrameComponents, NormalFrame, christoffel_kernel, covariant_kernel,
                       frame_project, frame_reconstruct, inverse3, normal_frame)
from .grid import Grid, as_full, d_tan, einsum, extrapolate_ghosts

log = logging.getLogger(__name__)

COND_MAX = 1e8
RATE_EPS = 1e-5
FACES = ("outer", "inner")


class BoundaryError(RuntimeError):
    """Singular face frame or ill-conditioned ghost solve."""


_es = einsum


def _inv2(q: np.ndarray) -> np.ndarray:
    det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
    if np.any(det <= 0):
        raise BoundaryError("boundary 2-metric is not positive definite")
    out = np.empty_like(q)
    out[0, 0], out[1, 1] = q[1, 1] / det, q[0, 0] / det
    out[0, 1], out[1, 0] = -q[0, 1] / det, -q[1, 0] / det
    return out


# ---------------------------------------------------------------------------
# conformal families


class ConformalBoundaryFamily:
    """A 1-parameter family of 2x2 metrics on a face, q(t, x1, x2)."""

    name = "abstract"

    def q(self, t: float, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dq(self, t: float, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """d/dt q; central difference unless overridden."""
        e = 1e-5
        return (self.q(t + e, x1, x2) - self.q(t - e, x1, x2)) / (2 * e)

    def sample(self, grid: Grid, t: float) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
        return self.q(t, x1, x2), self.dq(t, x1, x2)

    def describe(self) -> dict:
        return {"kind": self.name}


@dataclass
class ConstantFamily(ConformalBoundaryFamily):
    q0: tuple[float, float, float] = (1.0, 0.0, 1.0)   # q11, q12, q22
    name = "constant"

    def q(self, t, x1, x2):
        a, b, c = self.q0
        one = np.ones(np.shape(x1))
        return np.array([[a * one, b * one], [b * one, c * one]])

    def dq(self, t, x1, x2):
        return np.zeros((2, 2) + np.shape(x1))

    def describe(self):
        return {"kind": self.name, "q0": list(self.q0)}


@dataclass
class DiagExponentialFamily(ConformalBoundaryFamily):
    """[q_t] = diag(exp(2 lam t), exp(-2 lam t))."""
    lam: float = 0.0
    name = "diag-exponential"

    def q(self, t, x1, x2):
        z = np.zeros(np.shape(x1))
        return np.array([[z + np.exp(2 * self.lam * t), z], [z, z + np.exp(-2 * self.lam * t)]])

    def dq(self, t, x1, x2):
        z = np.zeros(np.shape(x1))
        lam = self.lam
        return np.array([[z + 2 * lam * np.exp(2 * lam * t), z],
                         [z, z - 2 * lam * np.exp(-2 * lam * t)]])

    def describe(self):
        return {"kind": self.name, "lambda": self.lam}


class TabulatedFamily(ConformalBoundaryFamily):
    """Time-sampled family on the face nodes with cubic-spline interpolation in t.

    ``table`` rows are ``t i1 i2 q11 q12 q22``.
    """

    name = "file"

    def __init__(self, table: np.ndarray, source: str = ""):
        table = np.atleast_2d(np.asarray(table, dtype=float))
        if table.shape[1] != 6:
            raise ValueError("family table needs six columns: t i1 i2 q11 q12 q22")
        times = np.unique(table[:, 0])
        if len(times) < 4:
            raise ValueError("cubic interpolation needs at least four time samples")
        i1 = table[:, 1].astype(int)
        i2 = table[:, 2].astype(int)
        self.n1, self.n2 = i1.max() + 1, i2.max() + 1
        vals = np.full((len(times), 3, self.n1, self.n2), np.nan)
        it = np.searchsorted(times, table[:, 0])
        vals[it, :, i1, i2] = table[:, 3:]
        if np.isnan(vals).any():
            raise ValueError("family table does not cover every (t, i1, i2)")
        self.source = source
        self.spline = CubicSpline(times, vals, axis=0)
        self.dspline = self.spline.derivative()

    @classmethod
    def from_file(cls, path: str) -> TabulatedFamily:
        return cls(np.loadtxt(path, ndmin=2), source=str(path))

    @staticmethod
    def _expand(c):
        return np.array([[c[0], c[1]], [c[1], c[2]]])

    def _check(self, x1):
        if np.shape(x1) != (self.n1, self.n2):
            raise ValueError(f"tabulated family is sampled on {self.n1}x{self.n2} face nodes, "
                             f"grid face has shape {np.shape(x1)}")

    def q(self, t, x1, x2):
        self._check(x1)
        return self._expand(self.spline(t))

    def dq(self, t, x1, x2):
        self._check(x1)
        return self._expand(self.dspline(t))

    def describe(self):
        return {"kind": self.name, "path": self.source}


class RescaledFamily(ConformalBoundaryFamily):
    """The representative Omega^2 q of the same conformal class."""

    def __init__(self, base: ConformalBoundaryFamily, omega: Callable, domega: Callable):
        self.base, self.omega, self.domega = base, omega, domega
        self.name = base.name

    def q(self, t, x1, x2):
        return self.omega(t, x1, x2) ** 2 * self.base.q(t, x1, x2)

    def dq(self, t, x1, x2):
        w = self.omega(t, x1, x2)
        return (2 * w * self.domega(t, x1, x2) * self.base.q(t, x1, x2)
                + w ** 2 * self.base.dq(t, x1, x2))


def hatk_from_q(q: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Trace-free mixed block hat k[A, B] = hat k_A^B from a representative and its rate.

    -1/2 q^{BC} dq_AC + 1/4 delta_A^B q^{DC} dq_DC.
    """
    qi = _inv2(q)
    m = -0.5 * _es("bc...,ac...->ab...", qi, dq)
    tr = 0.5 * (m[0, 0] + m[1, 1])
    m[0, 0] -= tr
    m[1, 1] -= tr
    return m


def hatk_from_conformal(family: ConformalBoundaryFamily, t: float, grid: Grid) -> np.ndarray:
    q, dq = family.sample(grid, t)
    return hatk_from_q(q, dq)


def unimodular(q: np.ndarray) -> np.ndarray:
    det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
    return q / np.sqrt(det)


# ---------------------------------------------------------------------------
# boundary data provider


@dataclass
class FaceTargets:
    """Prescribed values at one face: Dirichlet hat k and tr k, and the
    right-hand sides of the three Neumann-type conditions."""
    hat: np.ndarray                 # (2, 2, n1, n2), mixed [A, B]
    trk: np.ndarray                 # (n1, n2)
    mom: np.ndarray                 # (2, n1, n2)
    kcc: np.ndarray                 # (n1, n2)
    ntrk: np.ndarray                # (n1, n2)


class BoundaryData:
    """Supplies FaceTargets as a function of t.

    By default hat k comes from the face's conformal family and every other
    target is zero (vacuum, maximal gauge).  ``override(face, t)`` replaces
    the whole target set, which is how manufactured solutions are imposed.
    """

    def __init__(self, grid: Grid, outer: ConformalBoundaryFamily | None = None,
                 inner: ConformalBoundaryFamily | None = None,
                 override: Callable[[str, float], FaceTargets] | None = None):
        self.grid = grid
        self.families = {"outer": outer or ConstantFamily(), "inner": inner or ConstantFamily()}
        self.override = override

    def targets(self, face: str, t: float) -> FaceTargets:
        if self.override is not None:
            return self.override(face, t)
        hat = hatk_from_conformal(self.families[face], t, self.grid)
        z = np.zeros(hat.shape[2:])
        return FaceTargets(hat, z, np.zeros((2,) + z.shape), z.copy(), z.copy())


# ---------------------------------------------------------------------------
# face geometry


def _face_dn(grid: Grid, f: np.ndarray, i0: int) -> np.ndarray:
    """Centred x3 difference at slice i0 (uses the ghost at a face)."""
    return (f[..., i0 + 1] - f[..., i0 - 1]) / (2.0 * grid.h3)


def _face_grad(grid: Grid, f: np.ndarray, i0: int) -> np.ndarray:
    """Partials at slice i0, leading index c; tangential ones are periodic."""
    fi = f[..., i0]
    d1 = (np.roll(fi, -1, axis=-2) - np.roll(fi, 1, axis=-2)) / (2.0 * grid.h1)
    d2 = (np.roll(fi, -1, axis=-1) - np.roll(fi, 1, axis=-1)) / (2.0 * grid.h2)
    return np.stack([d1, d2, _face_dn(grid, f, i0)])


@dataclass
class FaceGeometry:
    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    frame: NormalFrame


def face_geometry(grid: Grid, g, face: str) -> FaceGeometry:
    g = as_full(g)
    i0 = grid.face_index(face)
    gf = g[..., i0]
    ginv, _ = inverse3(gf)
    gamma = christoffel_kernel(ginv, _face_grad(grid, g, i0))
    try:
        frame = normal_frame(gf, ginv)
    except ValueError as exc:
        raise BoundaryError(str(exc)) from exc
    return FaceGeometry(gf, ginv, gamma, frame)


def bc_functionals(cov: np.ndarray, fg: FaceGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three Neumann-type expressions from nabla_c k_ab (index order [c, a, b]).

    mom_A = g^{ij} nabla_i k_jA
    kcc   = 1/2 [(nabla_N k)(N,N) - q^{AB} (nabla_N k)_AB] + q^{AB} (nabla_B k)(N, d_A)
    ntrk  = N^c g^{ab} nabla_c k_ab
    """
    n, qi = fg.frame.n_up, fg.frame.qinv
    mom = _es("ij...,ija...->a...", fg.ginv, cov[:, :, :2])
    dn = _es("c...,cab...->ab...", n, cov)
    kcc = (0.5 * (_es("a...,b...,ab...->...", n, n, dn)
                  - _es("AB...,AB...->...", qi, dn[:2, :2]))
           + _es("AB...,BaA...,a...->...", qi, cov[:2, :, :2], n))
    ntrk = _es("ab...,ab...->...", fg.ginv, dn)
    return mom, kcc, ntrk


def chi_from_gamma(gamma: np.ndarray, frame: NormalFrame) -> tuple[np.ndarray, np.ndarray]:
    """chi_AB = Gamma^c_AB N_c and the mixed chi_A^B = q^{BC} chi_AC."""
    chi = _es("cab...,c...->ab...", gamma[:, :2, :2], frame.n_low)
    return chi, _es("bc...,ac...->ab...", frame.qinv, chi)


def boundary_chi(grid: Grid, g, face: str = "outer") -> tuple[np.ndarray, np.ndarray]:
    """Second fundamental form of the face, with one-sided normal differences."""
    g = as_full(g)
    i0 = grid.face_index(face)
    s = grid.face_sign(face)
    gf = g[..., i0]
    dn = s * (3 * gf - 4 * g[..., i0 - s] + g[..., i0 - 2 * s]) / (2.0 * grid.h3)
    fi = gf
    dg = np.stack([(np.roll(fi, -1, axis=-2) - np.roll(fi, 1, axis=-2)) / (2.0 * grid.h1),
                   (np.roll(fi, -1, axis=-1) - np.roll(fi, 1, axis=-1)) / (2.0 * grid.h2),
                   dn])
    ginv, _ = inverse3(gf)
    gamma = christoffel_kernel(ginv, dg)
    return chi_from_gamma(gamma, normal_frame(gf, ginv))


# ---------------------------------------------------------------------------
# projection onto the Dirichlet data


def frame_parts(comp: FrameComponents, frame: NormalFrame):
    mixed = comp.mixed(frame)
    kcc = mixed[0, 0] + mixed[1, 1]
    hat = mixed.copy()
    hat[0, 0] -= 0.5 * kcc
    hat[1, 1] -= 0.5 * kcc
    return hat, kcc


def dirichlet_project(k: np.ndarray, frame: NormalFrame, hat: np.ndarray,
                      trk: np.ndarray) -> np.ndarray:
    """Replace hat k by ``hat`` and set k_NN = trk - k_C^C; k_NA, k_C^C kept."""
    comp = frame_project(k, frame)
    _, kcc = frame_parts(comp, frame)
    mixed = hat.copy()
    mixed[0, 0] += 0.5 * kcc
    mixed[1, 1] += 0.5 * kcc
    k_ab = _es("ac...,cb...->ab...", mixed, frame.q)
    k_ab = 0.5 * (k_ab + np.swapaxes(k_ab, 0, 1))
    return frame_reconstruct(FrameComponents(k_ab, comp.k_na, trk - kcc), frame)


def _correction_basis(frame: NormalFrame) -> np.ndarray:
    """E_NA1, E_NA2, E_NN, E_CC as full tensors, shape (4, 3, 3, ...)."""
    nl, th = frame.n_low, frame.theta
    out = []
    for a in range(2):
        e = _es("i...,j...->ij...", nl, th[a])
        out.append(e + np.swapaxes(e, 0, 1))
    nn = _es("i...,j...->ij...", nl, nl)
    out.append(nn)
    # (g - N N) restricted by the coframe: theta^A theta^B q_AB
    h = _es("ai...,bj...,ab...->ij...", th, th, frame.q)
    out.append(0.5 * h)
    return np.stack(out)


# ---------------------------------------------------------------------------
# the fill


@dataclass
class BCReport:
    cond_max: float = 0.0
    residuals: dict = field(default_factory=dict)


def fill_k_ghosts(grid: Grid, g: np.ndarray, k: np.ndarray, face: str,
                  tg: FaceTargets, fg: FaceGeometry | None = None) -> float:
    """Solve the first ghost layer of k at ``face`` in place; returns max cond."""
    fg = fg or face_geometry(grid, g, face)
    i0, s = grid.face_index(face), grid.face_sign(face)
    ig = i0 + s
    # cubic extrapolation as the starting value
    k[..., ig] = 4 * k[..., i0] - 6 * k[..., i0 - s] + 4 * k[..., i0 - 2 * s] - k[..., i0 - 3 * s]
    dk = _face_grad(grid, k, i0)
    cov = covariant_kernel(fg.gamma, k[..., i0], dk)
    mom, kcc, ntrk = bc_functionals(cov, fg)
    f0 = np.concatenate([mom - tg.mom, (kcc - tg.kcc)[None], (ntrk - tg.ntrk)[None]])
    basis = _correction_basis(fg.frame)
    coef = s / (2.0 * grid.h3)
    cols = []
    for m in range(4):
        dcov = np.zeros_like(cov)
        dcov[2] = coef * basis[m]
        mm, kc, nt = bc_functionals(dcov, fg)
        cols.append(np.concatenate([mm, kc[None], nt[None]]))
    jac = np.moveaxis(np.stack(cols, axis=1), (0, 1), (-2, -1))      # (..., 4, 4)
    cond = np.linalg.cond(jac)
    cmax = float(np.max(cond))
    if not np.isfinite(cmax) or cmax > COND_MAX:
        raise BoundaryError(f"ill-conditioned ghost solve at {face} face (cond {cmax:.3e})")
    u = np.linalg.solve(jac, -np.moveaxis(f0, 0, -1)[..., None])[..., 0]
    k[..., ig] += _es("m...,mij...->ij...", np.moveaxis(u, -1, 0), basis)
    # the second layer continues the filled first layer
    k[..., ig + s] = 4 * k[..., ig] - 6 * k[..., i0] + 4 * k[..., i0 - s] - k[..., i0 - 2 * s]
    return cmax


def _project_face(grid, g, k, face, t, bdata):
    i0 = grid.face_index(face)
    tg = bdata.targets(face, t)
    gf = as_full(g)[..., i0]
    return dirichlet_project(k[..., i0], normal_frame(gf), tg.hat, tg.trk)


def face_rate(grid: Grid, g: np.ndarray, k: np.ndarray, phi: np.ndarray, v: np.ndarray,
              face: str, t: float, bdata: BoundaryData) -> np.ndarray:
    """Face value of v consistent with d/dt of the Dirichlet projection.

    With M(t, g, k) the projection, e0 M = P v + s where P is its linear part
    and s collects the explicit t and g dependence; the Dirichlet part of v
    is taken from s, the Neumann part of v is kept.  This is a projection.
    """
    i0 = grid.face_index(face)
    gf, kf, pf = g[..., i0], k[..., i0], phi[..., i0]
    gdot = -2.0 * pf * kf
    e = RATE_EPS
    tp, tm = bdata.targets(face, t + e), bdata.targets(face, t - e)
    mp = dirichlet_project(kf, normal_frame(gf + e * gdot), tp.hat, tp.trk)
    mm = dirichlet_project(kf, normal_frame(gf - e * gdot), tm.hat, tm.trk)
    srate = (mp - mm) / (2.0 * e * pf)
    frame = normal_frame(gf)
    z = np.zeros_like(tp.trk)
    pv = dirichlet_project(v[..., i0] - srate, frame, np.zeros_like(tp.hat), z)
    return pv + srate


def apply_bc(grid: Grid, g: np.ndarray, k: np.ndarray, v: np.ndarray | None,
             phi: np.ndarray | None, t: float, bdata: BoundaryData,
             faces=FACES) -> BCReport:
    """Fill ghosts and Dirichlet face values of (g, k, v, Phi) in place."""
    report = BCReport()
    extrapolate_ghosts(grid, g, 3)
    if phi is not None:
        for face in faces:
            phi[..., grid.face_index(face)] = 1.0
        extrapolate_ghosts(grid, phi, 3)
    for face in faces:
        i0 = grid.face_index(face)
        k[..., i0] = _project_face(grid, g, k, face, t, bdata)
        if v is not None and phi is not None:
            v[..., i0] = face_rate(grid, g, k, phi, v, face, t, bdata)
    for face in faces:
        fg = face_geometry(grid, g, face)
        tg = bdata.targets(face, t)
        report.cond_max = max(report.cond_max, fill_k_ghosts(grid, g, k, face, tg, fg))
    if v is not None:
        extrapolate_ghosts(grid, v, 3)
    return report


def bc_residuals(grid: Grid, g, k, t: float, bdata: BoundaryData, faces=FACES) -> dict:
    """Max-norm residuals of the four boundary conditions over the face nodes."""
    g, k = as_full(g), as_full(k)
    out = {"khat": 0.0, "knn": 0.0, "kna": 0.0, "kcc": 0.0, "ntrk": 0.0}
    for face in faces:
        i0 = grid.face_index(face)
        tg = bdata.targets(face, t)
        fg = face_geometry(grid, g, face)
        comp = frame_project(k[..., i0], fg.frame)
        hat, kcc = frame_parts(comp, fg.frame)
        cov = covariant_kernel(fg.gamma, k[..., i0], _face_grad(grid, k, i0))
        mom, kc, nt = bc_functionals(cov, fg)
        out["khat"] = max(out["khat"], float(np.max(np.abs(hat - tg.hat))))
        out["knn"] = max(out["knn"], float(np.max(np.abs(comp.k_nn + kcc - tg.trk))))
        out["kna"] = max(out["kna"], float(np.max(np.abs(mom - tg.mom))))
        out["kcc"] = max(out["kcc"], float(np.max(np.abs(kc - tg.kcc))))
        out["ntrk"] = max(out["ntrk"], float(np.max(np.abs(nt - tg.ntrk))))
    return out


# ---------------------------------------------------------------------------
# compatibility and data norms


@dataclass
class CompatibilityReport:
    conformal: float
    hat: float
    hat_rate: float

    def max(self) -> float:
        return max(self.conformal, self.hat, self.hat_rate)

    def as_dict(self) -> dict:
        return {"conformal": self.conformal, "hat": self.hat, "hat_rate": self.hat_rate}


def _hat_of(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    frame = normal_frame(g)
    return frame_parts(frame_project(k, frame), frame)[0]


def compatibility_check(grid: Grid, g, k, phi: np.ndarray, bdata: BoundaryData,
                        kdot: np.ndarray | None = None, faces=FACES,
                        t: float = 0.0) -> CompatibilityReport:
    """Residuals of the corner compatibility conditions at time t.

    * conformal: max |q/sqrt(det q) - [q_t]/sqrt(det [q_t])| of the induced face metric;
    * hat: max Frobenius |hat k(h, k) - hat k(family)|;
    * hat_rate: the same for d/dt hat k, the slice side evaluated along the
      second variation (``kdot`` = d_t k on the initial slice) and the
      first variation d_t g = -2 Phi k.
    """
    g, k = as_full(g), as_full(k)
    if kdot is None:
        from .evolution import initial_kdot
        kdot = initial_kdot(grid, g, k, phi)
    conf = hat_res = rate_res = 0.0
    e = RATE_EPS
    for face in faces:
        i0 = grid.face_index(face)
        gf, kf, pf, kd = g[..., i0], k[..., i0], phi[..., i0], kdot[..., i0]
        fam = bdata.families[face]
        qfam, _ = fam.sample(grid, t)
        conf = max(conf, float(np.max(np.abs(unimodular(gf[:2, :2]) - unimodular(qfam)))))
        tg = bdata.targets(face, t)
        hat = _hat_of(gf, kf)
        hat_res = max(hat_res, float(np.max(np.sqrt(np.sum((hat - tg.hat) ** 2, axis=(0, 1))))))
        gdot = -2.0 * pf * kf
        rate = (_hat_of(gf + e * gdot, kf + e * kd) - _hat_of(gf - e * gdot, kf - e * kd)) / (2 * e)
        trate = (bdata.targets(face, t + e).hat - bdata.targets(face, t - e).hat) / (2 * e)
        rate_res = max(rate_res, float(np.max(np.sqrt(np.sum((rate - trate) ** 2, axis=(0, 1))))))
    return CompatibilityReport(conf, hat_res, rate_res)


def _face_sobolev2(grid: Grid, f: np.ndarray, order: int) -> float:
    """Squared H^order norm on the face, tangential derivatives, coordinate area."""
    total = 0.0
    layer = [f]
    for m in range(order + 1):
        total += sum(float(np.sum(x ** 2)) for x in layer) * grid.h1 * grid.h2
        layer = [d_tan(grid, x, 1) for x in layer] + [d_tan(grid, layer[-1], 2)]
    return total


def _time_derivatives(fn: Callable[[float], np.ndarray], t: float, n: int, dt: float) -> list:
    """fn and its first n time derivatives by central differences."""
    out = [fn(t)]
    for i in range(1, n + 1):
        acc = 0.0
        for j in range(i + 1):
            acc = acc + (-1) ** j * comb(i, j) * fn(t + (i / 2 - j) * dt)
        out.append(acc / dt ** i)
    return out


def cbd_norm(grid: Grid, bdata: BoundaryData, r: int = 0, t_final: float = 0.0,
             samples: int = 5, dt: float = 1e-3) -> float:
    """Boundary-data constant: sum over faces of sup_t sum_i ||d_t^i hat k||^2_{H^{r+2-i}}."""
    if r not in (0, 1):
        raise ValueError("r must be 0 or 1")
    times = np.linspace(0.0, t_final, samples) if t_final > 0 else np.array([0.0])
    total = 0.0
    for face in FACES:
        best = 0.0
        for t in times:
            ders = _time_derivatives(lambda s: bdata.targets(face, s).hat, float(t), r + 2, dt)
            val = sum(_face_sobolev2(grid, ders[i], r + 2 - i) for i in range(r + 3))
            best = max(best, val)
        total += best
    return total
