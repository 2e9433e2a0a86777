"""Manufactured smooth solutions of the forced reduced system.

The closed-form family prescribes g(t, x) and Phi(t, x); k and v then
follow from the first variation and v = Phi^-1 d_t k, so the metric
equation needs no forcing.  The lapse and wave equations receive the
defects of the exact fields as sources.  Phi = 1 on both faces, so the
lapse boundary condition holds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .boundary import FaceGeometry, FaceTargets, bc_functionals, frame_parts
from .evolution import Jets, KQuantities, lapk_covariant, wave_rhs_kernel
from .geometry import (christoffel_kernel, covariant_kernel, frame_project, geometry_from_jets,
                       hessian_kernel, inverse3, normal_frame)
from .grid import Grid, SymTensorField, SYM_PAIRS

_t, _x1, _x2, _x3 = sp.symbols("t x1 x2 x3", real=True)
_X = (_x1, _x2, _x3)


def _default_fields(amp: float, period: float, x3_min: float):
    w = 2 * sp.pi / period
    L = -x3_min
    s = (_x3 - x3_min) / L                       # 0 on the inner face, 1 on the outer
    g = {
        (0, 0): 1 + amp * sp.sin(w * _x1 + _t) * sp.cos(sp.pi * s / 2),
        (1, 1): 1 + amp * sp.cos(w * _x2 - _t) * (1 + s) / 2,
        (2, 2): 1 + amp * sp.sin(w * (_x1 + _x2)) * sp.sin(_t + s),
        (0, 1): amp / 2 * sp.sin(w * _x2) * sp.cos(_t + s),
        (0, 2): amp / 2 * sp.cos(w * _x1) * sp.sin(_t) * s,
        (1, 2): amp / 2 * sp.sin(w * (_x1 + _x2) + _t),
    }
    phi = 1 + 2 * amp * s * (1 - s) * (1 + sp.sin(w * _x1) * sp.cos(_t) / 2)
    return g, phi


def _lamb(expr):
    return sp.lambdify((_t, _x1, _x2, _x3), expr, modules="numpy", cse=True)


@dataclass(frozen=True)
class _Key:
    amp: float
    period: float
    x3_min: float


@lru_cache(maxsize=8)
def _compiled(key: _Key):
    g, phi = _default_fields(key.amp, key.period, key.x3_min)
    comps = {}
    for i, j in SYM_PAIRS:
        gij = g[(i, j)]
        kij = -sp.diff(gij, _t) / (2 * phi)
        vij = sp.diff(kij, _t) / phi
        comps[(i, j)] = (gij, kij, vij)
    fns = {}
    for (i, j), (gij, kij, vij) in comps.items():
        fns[("g", i, j)] = _lamb(gij)
        fns[("k", i, j)] = _lamb(kij)
        fns[("v", i, j)] = _lamb(vij)
        fns[("dtv", i, j)] = _lamb(sp.diff(vij, _t))
        for c in range(3):
            fns[("dg", c, i, j)] = _lamb(sp.diff(gij, _X[c]))
            fns[("dk", c, i, j)] = _lamb(sp.diff(kij, _X[c]))
            for d in range(c, 3):
                fns[("ddg", c, d, i, j)] = _lamb(sp.diff(gij, _X[c], _X[d]))
                fns[("ddk", c, d, i, j)] = _lamb(sp.diff(kij, _X[c], _X[d]))
    pd = sp.diff(phi, _t)
    for name, e in (("phi", phi), ("phidot", pd)):
        fns[(name,)] = _lamb(e)
        for c in range(3):
            fns[("d" + name, c)] = _lamb(sp.diff(e, _X[c]))
            for d in range(c, 3):
                fns[("dd" + name, c, d)] = _lamb(sp.diff(e, _X[c], _X[d]))
    return fns


class ManufacturedSolution:
    """Closed-form (g, k, v, Phi) on the collar with periodic tangential dependence."""

    def __init__(self, amp: float = 0.1, period: float = 1.0, x3_min: float = -1.0):
        self.amp, self.period, self.x3_min = float(amp), float(period), float(x3_min)
        self.fns = _compiled(_Key(self.amp, self.period, self.x3_min))

    def _ev(self, key, t, X):
        out = self.fns[key](t, *X)
        return np.broadcast_to(np.asarray(out, dtype=float), X[0].shape).copy()

    def _sym(self, prefix, t, X, lead=()):
        shape = X[0].shape
        out = np.empty((3, 3) + shape)
        for i, j in SYM_PAIRS:
            out[i, j] = out[j, i] = self._ev((prefix,) + lead + (i, j), t, X)
        return out

    def fields(self, t: float, X) -> dict:
        return {"g": self._sym("g", t, X), "k": self._sym("k", t, X),
                "v": self._sym("v", t, X), "phi": self._ev(("phi",), t, X)}

    def jets(self, t: float, X) -> tuple[Jets, np.ndarray]:
        """Exact jets (with the full second partials of k) and ddk."""
        shape = X[0].shape
        g, k, v = self._sym("g", t, X), self._sym("k", t, X), self._sym("v", t, X)
        dg = np.stack([self._sym("dg", t, X, (c,)) for c in range(3)])
        dk = np.stack([self._sym("dk", t, X, (c,)) for c in range(3)])
        ddg = np.empty((3, 3, 3, 3) + shape)
        ddk = np.empty_like(ddg)
        for c in range(3):
            for d in range(c, 3):
                ddg[c, d] = ddg[d, c] = self._sym("ddg", t, X, (c, d))
                ddk[c, d] = ddk[d, c] = self._sym("ddk", t, X, (c, d))
        scal = {}
        for name in ("phi", "phidot"):
            scal[name] = self._ev((name,), t, X)
            scal["d" + name] = np.stack([self._ev(("d" + name, c), t, X) for c in range(3)])
            h = np.empty((3, 3) + shape)
            for c in range(3):
                for d in range(c, 3):
                    h[c, d] = h[d, c] = self._ev(("dd" + name, c, d), t, X)
            scal["dd" + name] = h
        ginv, _ = inverse3(g, check=False)
        lap_k = np.einsum("ab...,abij...->ij...", ginv, ddk)
        J = Jets(g, dg, ddg, k, dk, lap_k, v, scal["phi"], scal["dphi"], scal["ddphi"],
                 scal["phidot"], scal["dphidot"], scal["ddphidot"])
        return J, ddk

    def dtv(self, t, X):
        return self._sym("dtv", t, X)

    # -- defects ---------------------------------------------------------
    def lapse_defect(self, t: float, X) -> np.ndarray:
        J, _ = self.jets(t, X)
        geom = geometry_from_jets(J.g, J.dg, J.ddg, check=False)
        lap = np.einsum("ab...,ab...->...", geom.ginv, hessian_kernel(geom.gamma, J.dphi, J.ddphi))
        kq = KQuantities.build(geom, J.k, J.dk)
        return lap - kq.k2 * J.phi

    def wave_defect(self, t: float, X) -> np.ndarray:
        """S_v = d_t v - Phi (Delta_g k + W) on the exact fields."""
        J, _ = self.jets(t, X)
        geom = geometry_from_jets(J.g, J.dg, J.ddg, check=False)
        kq = KQuantities.build(geom, J.k, J.dk)
        return self.dtv(t, X) - J.phi * (lapk_covariant(geom, J) + wave_rhs_kernel(J, geom, kq))

    # -- grid helpers ----------------------------------------------------
    def state_arrays(self, grid: Grid, t: float):
        X = grid.mesh()
        f = self.fields(t, X)
        return f["g"], f["k"], f["v"], f["phi"]

    def face_targets(self, grid: Grid, face: str, t: float) -> FaceTargets:
        x1, x2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
        x3 = np.full(x1.shape, grid.x3[grid.face_index(face)])
        J, _ = self.jets(t, (x1, x2, x3))
        ginv, _ = inverse3(J.g, check=False)
        gamma = christoffel_kernel(ginv, J.dg)
        frame = normal_frame(J.g, ginv)
        fg = FaceGeometry(J.g, ginv, gamma, frame)
        cov = covariant_kernel(gamma, J.k, J.dk)
        mom, kcc, ntrk = bc_functionals(cov, fg)
        comp = frame_project(J.k, frame)
        hat, kc = frame_parts(comp, frame)
        return FaceTargets(hat, comp.k_nn + kc, mom, kcc, ntrk)


class MMSSources:
    """Grid sources for a manufactured solution, cached per stage time."""

    FD_STEP = 1e-5

    def __init__(self, grid: Grid, exact: ManufacturedSolution):
        self.grid, self.exact = grid, exact
        self.X = grid.mesh()
        self._cache: dict = {}

    def _get(self, name, t, fn):
        key = (name, float(t))
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = fn(t, self.X)
        return self._cache[key]

    def lapse(self, t):
        return self._get("lapse", t, self.exact.lapse_defect)

    def _lapse_rate(self, t, X):
        e = self.FD_STEP
        return (self.exact.lapse_defect(t + e, X) - self.exact.lapse_defect(t - e, X)) / (2 * e)

    def lapse_rate(self, t):
        return self._get("lapse_rate", t, self._lapse_rate)

    def wave(self, t):
        return self._get("wave", t, self.exact.wave_defect)


def mms_source(grid: Grid, exact: ManufacturedSolution, t: float) -> dict:
    """Source fields at time t: metric (identically zero), lapse, lapse rate and wave."""
    src = MMSSources(grid, exact)
    return {"metric": np.zeros((3, 3) + grid.shape), "lapse": src.lapse(t),
            "lapse_rate": src.lapse_rate(t), "wave": src.wave(t)}


def exact_state_fields(grid: Grid, exact: ManufacturedSolution, t: float):
    g, k, v, phi = exact.state_arrays(grid, t)
    return SymTensorField.from_full(g), SymTensorField.from_full(k), SymTensorField.from_full(v), phi
