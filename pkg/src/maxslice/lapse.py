"""Elliptic lapse solve: Delta_g Phi - |k|^2 Phi = S with Phi = 1 on both faces.

The operator is discretised in conservative form,

    A u = -sum_ab D_a(sqrt(g) g^ab D_b u) + sqrt(g) m u,

on the interior nodes (face values are Dirichlet).  Diagonal blocks use
face-averaged coefficients and a compact stencil, mixed blocks compose centred
differences.  Both pieces are symmetric on the interior unknowns, so A is SPD
whenever m >= 0 and conjugate gradients apply.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .geometry import inverse3, norm2_inv
from .grid import Grid, as_full

log = logging.getLogger(__name__)


class LapseError(RuntimeError):
    """The elliptic solve did not converge or its input is inadmissible."""

    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(msg)
        self.residual = residual


@dataclass
class EllipticConfig:
    rel_tol: float = 1e-10
    max_iter: int = 2000
    initial_guess_policy: str = "previous-solution"

    def validate(self) -> None:
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.initial_guess_policy not in ("previous-solution", "unity"):
            raise ValueError(f"unknown initial_guess_policy {self.initial_guess_policy!r}")


class EllipticOperator:
    """Matrix-free  A = sqrt(g) (-Delta_g + m)  acting on interior nodes."""

    def __init__(self, grid: Grid, g, m: np.ndarray):
        self.grid = grid
        g = as_full(g)[..., grid.nodes]
        ginv, det = inverse3(g)
        sq = np.sqrt(det)
        self.c = sq * ginv                       # sqrt(g) g^ab on nodes
        self.sqrtg = sq
        m = np.asarray(m)[..., grid.nodes] if np.ndim(m) else np.full(sq.shape, float(m))
        if np.any(m < 0):
            raise LapseError("zeroth-order coefficient |k|^2 must be non-negative")
        self.m = sq * m
        h = grid.h
        # face-averaged diagonal coefficients; x3 faces between nodes
        self.cf = [0.5 * (self.c[a, a] + np.roll(self.c[a, a], -1, axis=a)) for a in (0, 1)]
        self.cf.append(0.5 * (self.c[2, 2][..., 1:] + self.c[2, 2][..., :-1]))
        self.h = h
        self.interior = (slice(None), slice(None), slice(1, -1))
        diag = self.m.copy()
        for a in (0, 1):
            diag += (self.cf[a] + np.roll(self.cf[a], 1, axis=a)) / h[a] ** 2
        diag[..., 1:-1] += (self.cf[2][..., 1:] + self.cf[2][..., :-1]) / h[2] ** 2
        self.diag = diag[self.interior]
        self.n = self.diag.size

    def _d(self, u: np.ndarray, a: int) -> np.ndarray:
        """Centred first difference on the node block; x3 faces get zero."""
        if a < 2:
            return (np.roll(u, -1, axis=a) - np.roll(u, 1, axis=a)) / (2.0 * self.h[a])
        out = np.zeros_like(u)
        out[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2.0 * self.h[2])
        return out

    def apply_nodes(self, u: np.ndarray) -> np.ndarray:
        """A applied to a node-block field; the result is meaningful off the faces."""
        h = self.h
        out = self.m * u
        for a in (0, 1):
            flux = self.cf[a] * (np.roll(u, -1, axis=a) - u) / h[a]
            out -= (flux - np.roll(flux, 1, axis=a)) / h[a]
        flux = self.cf[2] * (u[..., 1:] - u[..., :-1]) / h[2]
        out[..., 1:-1] -= (flux[..., 1:] - flux[..., :-1]) / h[2]
        du = [self._d(u, b) for b in range(3)]
        for a in range(3):
            for b in range(3):
                if a != b:
                    out -= self._d(self.c[a, b] * du[b], a)
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        u = np.zeros(self.sqrtg.shape)
        u[self.interior] = x.reshape(self.diag.shape)
        return self.apply_nodes(u)[self.interior].ravel()

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.matvec, dtype=float)


def solve_dirichlet(grid: Grid, g, m: np.ndarray, source: np.ndarray | None = None,
                    face_value: float = 1.0, cfg: EllipticConfig | None = None,
                    guess: np.ndarray | None = None) -> np.ndarray:
    """Solve Delta_g w - m w = source with w = face_value on both faces.

    Returns w on the full grid with NaN ghosts.
    """
    cfg = cfg or EllipticConfig()
    cfg.validate()
    op = EllipticOperator(grid, g, m)
    rhs = -face_value * op.m
    if source is not None:
        rhs = rhs - op.sqrtg * np.asarray(source)[..., grid.nodes]
    b = rhs[op.interior].ravel()
    out = grid.empty()
    out[..., grid.nodes] = face_value
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return out
    x0 = None
    if guess is not None and cfg.initial_guess_policy == "previous-solution":
        x0 = (np.asarray(guess)[..., grid.nodes][op.interior] - face_value).ravel()
    inv_diag = 1.0 / op.diag.ravel()
    M = LinearOperator((op.n, op.n), matvec=lambda r: inv_diag * r, dtype=float)
    x, info = cg(op.as_linear_operator(), b, x0=x0, rtol=cfg.rel_tol, atol=0.0,
                 maxiter=cfg.max_iter, M=M)
    res = float(np.linalg.norm(op.matvec(x) - b) / bnorm)
    if info != 0 or not np.isfinite(res):
        raise LapseError(f"lapse solve did not converge in {cfg.max_iter} iterations "
                         f"(relative residual {res:.3e})", res)
    out[..., grid.nodes][op.interior] += x.reshape(op.diag.shape)
    return out


def solve_lapse(grid: Grid, g, k, cfg: EllipticConfig | None = None,
                guess: np.ndarray | None = None, source: np.ndarray | None = None) -> np.ndarray:
    """Lapse of the maximal foliation for the slice (g, k); ghosts left NaN."""
    g, k = as_full(g), as_full(k)
    ginv, _ = inverse3(g, check=False)
    k2 = norm2_inv(ginv, k)
    k2 = np.where(np.isfinite(k2), k2, 0.0)
    if np.any(k2[..., grid.nodes] < -1e-14):
        raise LapseError("|k|^2 is negative")
    return solve_dirichlet(grid, g, np.maximum(k2, 0.0), source, 1.0, cfg, guess)


def lapse_residual(grid: Grid, g, k, phi: np.ndarray,
                   source: np.ndarray | None = None) -> np.ndarray:
    """Delta_g Phi - |k|^2 Phi - S on interior nodes; zero on the faces."""
    g, k = as_full(g), as_full(k)
    ginv, _ = inverse3(g, check=False)
    k2 = np.maximum(np.nan_to_num(norm2_inv(ginv, k)), 0.0)
    op = EllipticOperator(grid, g, k2)
    out = -op.apply_nodes(np.asarray(phi)[..., grid.nodes]) / op.sqrtg
    if source is not None:
        out = out - np.asarray(source)[..., grid.nodes]
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    res = grid.empty()
    res[..., grid.nodes] = out
    return res
