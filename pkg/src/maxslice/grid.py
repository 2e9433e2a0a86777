"""Structured collar grid and second-order finite-difference calculus.

The collar is T^2 x [x3_min, 0]: periodic in x1, x2 (no duplicated seam
point) and node-centred in x3 with nodes on both faces.  Arrays carry their
grid axes last, ``(..., n1, n2, n3 + 2 * ghost)``; the leading axes hold
tensor indices.  Ghost layers exist only in x3 and are initialised to NaN so
that a derivative reaching into an unfilled layer is detected.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

STENCIL_HALF_WIDTH = 1

# index of (i, j) into the six stored components, and back
SYM_INDEX = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])
SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@lru_cache(maxsize=1024)
def _einsum_plan(spec: str, shapes: tuple):
    """Greedy pairwise plan as a list of (i, j, two-operand spec), or None.

    Operands must carry any ellipsis at the end of their subscripts; other
    specs fall back to np.einsum with a cached path.
    """
    ins, out = spec.replace(" ", "").split("->")
    terms = ins.split(",")
    if any("..." in t[:-3] or t.count("...") > 1 for t in terms + [out]):
        return None
    ops = [np.broadcast_to(0.0, sh) for sh in shapes]
    path = np.einsum_path(spec, *ops, optimize="greedy")[0][1:]
    live = [(t.replace("...", ""), t.endswith("...")) for t in terms]
    out_l, out_e = out.replace("...", ""), out.endswith("...")
    plan = []
    for n, pair in enumerate(path):
        i, j = sorted(pair)
        (a, ea), (b, eb) = live[i], live[j]
        rest = [t for m, (t, _) in enumerate(live) if m not in (i, j)]
        if n == len(path) - 1:
            res, er = out_l, out_e
        else:
            keep = set("".join(rest)) | set(out_l)
            res = "".join(dict.fromkeys(c for c in a + b if c in keep))
            er = ea or eb
        sub = f"{a}{'...' * ea},{b}{'...' * eb}->{res}{'...' * er}"
        plan.append((i, j, sub))
        live = [t for m, t in enumerate(live) if m not in (i, j)] + [(res, er)]
    return plan


@lru_cache(maxsize=1024)
def _einsum_path(spec: str, shapes: tuple) -> list:
    ops = [np.broadcast_to(0.0, sh) for sh in shapes]
    return np.einsum_path(spec, *ops, optimize="greedy")[0]


def einsum(spec: str, *ops):
    """np.einsum for grid fields, executed pairwise along a cached contraction plan."""
    if len(ops) < 3:
        return np.einsum(spec, *ops)
    shapes = tuple(np.shape(o) for o in ops)
    plan = _einsum_plan(spec, shapes)
    if plan is None:
        return np.einsum(spec, *ops, optimize=_einsum_path(spec, shapes))
    live = list(ops)
    for i, j, sub in plan:
        r = np.einsum(sub, live[i], live[j])
        live = [o for m, o in enumerate(live) if m not in (i, j)] + [r]
    return live[0]


class GridError(ValueError):
    """Invalid grid specification."""


class GhostError(RuntimeError):
    """A stencil reached into a ghost layer that was never filled."""


@dataclass(frozen=True)
class GridSpec:
    n1: int
    n2: int
    n3: int
    x3_min: float = -1.0
    ghost: int = 2
    period: float = 2.0 * math.pi

    def validate(self) -> None:
        for name in ("n1", "n2", "n3"):
            if getattr(self, name) < 4:
                raise GridError(f"{name} must be >= 4, got {getattr(self, name)}")
        if not self.x3_min < 0:
            raise GridError(f"x3_min must be negative, got {self.x3_min}")
        if self.period <= 0:
            raise GridError(f"period must be positive, got {self.period}")
        if self.ghost < max(2, STENCIL_HALF_WIDTH):
            raise GridError(
                f"ghost={self.ghost} is narrower than the stencil half-width "
                f"plus one derivative level (need >= 2)")


class Grid:
    """Coordinates, spacings and slicing helpers for one collar grid."""

    def __init__(self, spec: GridSpec):
        spec.validate()
        self.spec = spec
        self.n1, self.n2, self.n3 = spec.n1, spec.n2, spec.n3
        self.ghost = spec.ghost
        self.h1 = spec.period / spec.n1
        self.h2 = spec.period / spec.n2
        self.h3 = -spec.x3_min / (spec.n3 - 1)
        self.h = (self.h1, self.h2, self.h3)
        self.x1 = np.arange(spec.n1) * self.h1
        self.x2 = np.arange(spec.n2) * self.h2
        g = self.ghost
        self.x3 = spec.x3_min + (np.arange(spec.n3 + 2 * g) - g) * self.h3
        self.x3[g + spec.n3 - 1] = 0.0
        self.nodes = slice(g, g + spec.n3)
        self.i_inner = g
        self.i_outer = g + spec.n3 - 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 + 2 * self.ghost)

    @property
    def node_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def h_min(self) -> float:
        return min(self.h)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")

    def empty(self, lead: tuple[int, ...] = ()) -> np.ndarray:
        """Array with NaN ghost layers (the unfilled sentinel) and zero nodes."""
        a = np.full(lead + self.shape, np.nan)
        a[..., self.nodes] = 0.0
        return a

    def face_index(self, face: str) -> int:
        if face == "outer":
            return self.i_outer
        if face == "inner":
            return self.i_inner
        raise ValueError(f"unknown face {face!r}")

    def face_sign(self, face: str) -> int:
        """+1 if the ghost side of ``face`` lies at larger i3."""
        return 1 if face == "outer" else -1

    def node_weights(self) -> np.ndarray:
        """Quadrature weights on the node range (trapezoid ends in x3)."""
        w3 = np.ones(self.n3)
        w3[0] = w3[-1] = 0.5
        return (self.h1 * self.h2 * self.h3) * np.broadcast_to(w3, self.node_shape)


def make_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


class SymTensorField:
    """Symmetric 3x3 tensor field stored as six components.

    ``field[i, j]`` and ``field[j, i]`` address the same storage.
    """

    __slots__ = ("comps",)

    def __init__(self, comps: np.ndarray):
        comps = np.asarray(comps, dtype=float)
        if comps.shape[0] != 6:
            raise ValueError("expected six leading components")
        self.comps = comps

    @classmethod
    def from_full(cls, full: np.ndarray) -> SymTensorField:
        full = np.asarray(full, dtype=float)
        comps = np.stack([0.5 * (full[i, j] + full[j, i]) for i, j in SYM_PAIRS])
        return cls(comps)

    @classmethod
    def identity(cls, shape: tuple[int, ...], scale: float = 1.0) -> SymTensorField:
        comps = np.zeros((6,) + tuple(shape))
        comps[[0, 3, 5]] = scale
        return cls(comps)

    def full(self) -> np.ndarray:
        return self.comps[SYM_INDEX]

    def __getitem__(self, ij: tuple[int, int]) -> np.ndarray:
        i, j = ij
        return self.comps[SYM_INDEX[i, j]]

    def __setitem__(self, ij: tuple[int, int], value) -> None:
        i, j = ij
        self.comps[SYM_INDEX[i, j]] = value

    def copy(self) -> SymTensorField:
        return SymTensorField(self.comps.copy())


def as_full(t) -> np.ndarray:
    """Full (3, 3, ...) view of a tensor given as SymTensorField or array."""
    if isinstance(t, SymTensorField):
        return t.full()
    return np.asarray(t)


# ---------------------------------------------------------------------------
# finite differences


def _check_nodes(grid: Grid, out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out[..., grid.nodes])):
        raise GhostError("normal derivative touched an unfilled ghost layer")
    return out


def d_tan(grid: Grid, f: np.ndarray, direction: int) -> np.ndarray:
    """Centred periodic difference along x1 (direction=1) or x2 (direction=2)."""
    if direction not in (1, 2):
        raise ValueError("tangential direction must be 1 or 2")
    axis = f.ndim - 3 + (direction - 1)
    h = grid.h[direction - 1]
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def d_norm(grid: Grid, f: np.ndarray, check: bool = True) -> np.ndarray:
    """Centred difference along x3.

    The outermost ghost entries of the result are NaN.  With ``check`` the
    node range must come out finite, otherwise :class:`GhostError`.
    """
    out = np.full(f.shape, np.nan)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * grid.h3)
    return _check_nodes(grid, out) if check else out


def d2(grid: Grid, f: np.ndarray, direction: int, check: bool = True) -> np.ndarray:
    """Compact three-point second derivative along one coordinate (1, 2, 3)."""
    if direction in (1, 2):
        axis = f.ndim - 3 + (direction - 1)
        h = grid.h[direction - 1]
        return (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / h**2
    out = np.full(f.shape, np.nan)
    out[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / grid.h3**2
    return _check_nodes(grid, out) if check else out


def partial(grid: Grid, f: np.ndarray, direction: int, check: bool = True) -> np.ndarray:
    """First derivative along coordinate 1, 2 or 3."""
    if direction == 3:
        return d_norm(grid, f, check=check)
    return d_tan(grid, f, direction)


def gradient(grid: Grid, f: np.ndarray, check: bool = True) -> np.ndarray:
    """Array of first partials with a new leading axis of length 3."""
    return np.stack([partial(grid, f, a, check) for a in (1, 2, 3)])


def hessian_partials(grid: Grid, f: np.ndarray, check: bool = True) -> np.ndarray:
    """Second partials with two new leading axes.

    Diagonal entries use the compact stencil; mixed entries compose centred
    first differences.
    """
    out = np.empty((3, 3) + f.shape)
    for a in range(3):
        out[a, a] = d2(grid, f, a + 1, check)
    out[0, 1] = out[1, 0] = d_tan(grid, d_tan(grid, f, 1), 2)
    for a in (0, 1):
        m = d_tan(grid, d_norm(grid, f, check), a + 1)
        out[a, 2] = out[2, a] = m
    return out


# ---------------------------------------------------------------------------
# ghost extrapolation

_EXTRAP = {
    2: np.array([3.0, -3.0, 1.0]),        # quadratic through three points
    3: np.array([4.0, -6.0, 4.0, -1.0]),  # cubic through four points
}


def extrapolate_ghosts(grid: Grid, f: np.ndarray, order: int = 3,
                       faces: tuple[str, ...] = ("inner", "outer")) -> np.ndarray:
    """Fill ghost layers in place by polynomial extrapolation from the nodes."""
    c = _EXTRAP[order]
    m = len(c)
    for face in faces:
        s = grid.face_sign(face)
        i0 = grid.face_index(face)
        for layer in range(1, grid.ghost + 1):
            target = i0 + s * layer
            src = [target - s * (q + 1) for q in range(m)]
            f[..., target] = sum(cq * f[..., iq] for cq, iq in zip(c, src))
    return f


# ---------------------------------------------------------------------------
# quadrature


def det3(g) -> np.ndarray:
    """Pointwise determinant of a 3x3 tensor field."""
    g = as_full(g)
    det = (g[0, 0] * (g[1, 1] * g[2, 2] - g[1, 2] * g[2, 1])
           - g[0, 1] * (g[1, 0] * g[2, 2] - g[1, 2] * g[2, 0])
           + g[0, 2] * (g[1, 0] * g[2, 1] - g[1, 1] * g[2, 0]))
    return det


def integrate_volume(grid: Grid, f: np.ndarray, g) -> float:
    """Sum of f sqrt(det g) over nodes, trapezoid-weighted in x3."""
    det = det3(g)[..., grid.nodes]
    if np.any(det <= 0):
        raise ValueError("metric determinant must be positive for volume integration")
    return float(np.sum(f[..., grid.nodes] * np.sqrt(det) * grid.node_weights()))


def integrate_boundary(grid: Grid, f: np.ndarray, q: np.ndarray) -> float:
    """Integrate a face field f(i1, i2) against the area form of a 2x2 metric q.

    ``q`` has shape (2, 2, n1, n2).
    """
    det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
    if np.any(det <= 0):
        raise ValueError("boundary metric determinant must be positive")
    return float(np.sum(f * np.sqrt(det)) * grid.h1 * grid.h2)
