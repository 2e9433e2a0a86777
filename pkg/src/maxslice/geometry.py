"""Pointwise Riemannian calculus for the spatial metric.

Algebraic kernels (``*_kernel``) act on derivative arrays supplied by the
caller, so the same formulas serve finite-difference jets on the grid and
exact jets of closed-form fields.  Index convention: tensor indices lead,
grid axes trail; ``dT[c, a, b]`` is the partial along ``c`` of ``T[a, b]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, as_full, d2, d_norm, d_tan, det3, einsum, gradient, hessian_partials

DET_FLOOR = 1e-10
EIG_FLOOR = 1e-8


class MetricError(ValueError):
    """The spatial metric is singular or not positive definite."""


_es = einsum


def inverse3(g: np.ndarray, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form adjugate inverse and determinant of a 3x3 tensor field."""
    g = as_full(g)
    det = det3(g)
    adj = np.empty_like(g)
    adj[0, 0] = g[1, 1] * g[2, 2] - g[1, 2] * g[2, 1]
    adj[0, 1] = g[0, 2] * g[2, 1] - g[0, 1] * g[2, 2]
    adj[0, 2] = g[0, 1] * g[1, 2] - g[0, 2] * g[1, 1]
    adj[1, 0] = g[1, 2] * g[2, 0] - g[1, 0] * g[2, 2]
    adj[1, 1] = g[0, 0] * g[2, 2] - g[0, 2] * g[2, 0]
    adj[1, 2] = g[0, 2] * g[1, 0] - g[0, 0] * g[1, 2]
    adj[2, 0] = g[1, 0] * g[2, 1] - g[1, 1] * g[2, 0]
    adj[2, 1] = g[0, 1] * g[2, 0] - g[0, 0] * g[2, 1]
    adj[2, 2] = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if check:
        check_metric(g, det)
    with np.errstate(invalid="ignore", divide="ignore"):
        return adj / det, det


def check_metric(g: np.ndarray, det: np.ndarray | None = None) -> None:
    """Abort on a degenerate slice: det g < 1e-10 or an eigenvalue < 1e-8."""
    g = as_full(g)
    if det is None:
        det = det3(g)
    finite = np.isfinite(det)
    if np.any(det[finite] < DET_FLOOR):
        raise MetricError(f"det g fell below {DET_FLOOR:g} (min {det[finite].min():.3e})")
    # lambda_min >= det / lambda_max^2 >= det / tr^2 once the leading minors are
    # positive, so only nodes failing that bound need an eigen-solve
    m2 = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    tr = g[0, 0] + g[1, 1] + g[2, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        safe = (g[0, 0] > 0) & (m2 > 0) & (det / tr ** 2 >= EIG_FLOOR)
    doubt = ~safe & np.isfinite(det)
    if np.any(doubt):
        pts = np.moveaxis(g[:, :, doubt], -1, 0)
        pts = pts[np.isfinite(pts).all(axis=(1, 2))]
        lam = np.linalg.eigvalsh(pts)[:, 0].min() if len(pts) else np.inf
        if lam < EIG_FLOOR:
            raise MetricError(f"metric eigenvalue {lam:.3e} below {EIG_FLOOR:g}")


# ---------------------------------------------------------------------------
# kernels


def christoffel_kernel(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^a_{bc} from the inverse metric and first partials of g."""
    # low[l, b, c] = 1/2 (d_b g_cl + d_c g_bl - d_l g_bc)
    low = 0.5 * (np.einsum("bcl...->lbc...", dg)
                 + np.einsum("cbl...->lbc...", dg)
                 - dg)
    return _es("al...,lbc...->abc...", ginv, low)


def dchristoffel_kernel(ginv: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """Partials d_d Gamma^a_{bc} from first and second partials of g.

    ``ddg[d, e, a, b]`` is d_d d_e g_ab.  Result index order is [d, a, b, c].
    """
    low = 0.5 * (np.einsum("bcl...->lbc...", dg)
                 + np.einsum("cbl...->lbc...", dg)
                 - dg)
    dlow = 0.5 * (np.einsum("dbcl...->dlbc...", ddg)
                  + np.einsum("dcbl...->dlbc...", ddg)
                  - np.einsum("dlbc...->dlbc...", ddg))
    dginv = -_es("am...,dmn...,nl...->dal...", ginv, dg, ginv)
    return (_es("dal...,lbc...->dabc...", dginv, low)
            + _es("al...,dlbc...->dabc...", ginv, dlow))


def ricci_kernel(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """R_ij = d_a G^a_ji - d_j G^a_ia + G^a_ab G^b_ji - G^a_jb G^b_ai, symmetrised."""
    r = (np.einsum("aaji...->ji...", dgamma)
         - np.einsum("jaia...->ij...", dgamma)
         + _es("aab...,bji...->ij...", gamma, gamma)
         - _es("ajb...,bai...->ij...", gamma, gamma))
    return 0.5 * (r + np.swapaxes(r, 0, 1))


def covariant_kernel(gamma: np.ndarray, t: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """nabla_c T_ab for a covariant 2-tensor, index order [c, a, b]."""
    return (dt
            - _es("dca...,db...->cab...", gamma, t)
            - _es("dcb...,ad...->cab...", gamma, t))


def hessian_kernel(gamma: np.ndarray, dphi: np.ndarray, ddphi: np.ndarray) -> np.ndarray:
    return ddphi - _es("aij...,a...->ij...", gamma, dphi)


def laplace_tensor_kernel(ginv, gamma, dgamma, t, dt, lap_partial) -> np.ndarray:
    """g^{ab} nabla_a nabla_b T_ij.

    ``lap_partial`` is g^{ab} d_a d_b T_ij, contracted by the caller so the
    full second-derivative array never has to exist on large grids.
    """
    cov = covariant_kernel(gamma, t, dt)                     # [b, i, j]
    # d_a (nabla_b T_ij) contracted with g^{ab}, minus the partial part
    gdg = _es("ab...,adbi...->di...", ginv, dgamma)          # g^ab d_a G^d_bi
    ggam = _es("ab...,dbi...->adi...", ginv, gamma)           # g^ab G^d_bi
    d_cov = (lap_partial
             - _es("di...,dj...->ij...", gdg, t)
             - _es("adi...,adj...->ij...", ggam, dt)
             - _es("dj...,id...->ij...", gdg, t)
             - _es("adj...,aid...->ij...", ggam, dt))
    ggc = _es("ab...,cab...->c...", ginv, gamma)             # g^ab G^c_ab
    return (d_cov
            - _es("c...,cij...->ij...", ggc, cov)
            - _es("adi...,adj...->ij...", ggam, cov)
            - _es("adj...,aid...->ij...", ggam, cov))


def laplace_scalar_kernel(ginv, gamma, dphi, ddphi) -> np.ndarray:
    return _es("ij...,ij...->...", ginv, hessian_kernel(gamma, dphi, ddphi))


def dt_christoffel_kernel(ginv, gamma, k, dk, phi, dphi) -> np.ndarray:
    """d_t Gamma^b_ac = g^{bl}[nabla_l(Phi k_ac) - nabla_a(Phi k_cl) - nabla_c(Phi k_al)]."""
    cov = covariant_kernel(gamma, k, dk)
    w = _es("l...,ac...->lac...", dphi, k) + phi * cov        # nabla_l (Phi k_ac)
    inner = w - np.einsum("acl...->lac...", w) - np.einsum("cal...->lac...", w)
    return _es("bl...,lac...->bac...", ginv, inner)


# ---------------------------------------------------------------------------
# grid-level geometry bundle


@dataclass
class MetricGeometry:
    g: np.ndarray
    ginv: np.ndarray
    det: np.ndarray
    dg: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def geometry_from_jets(g, dg, ddg, check: bool = True) -> MetricGeometry:
    g = as_full(g)
    ginv, det = inverse3(g, check=check)
    gamma = christoffel_kernel(ginv, dg)
    dgamma = dchristoffel_kernel(ginv, dg, ddg)
    ric = ricci_kernel(gamma, dgamma)
    return MetricGeometry(g, ginv, det, dg, gamma, dgamma, ric,
                          _es("ij...,ij...->...", ginv, ric))


def tensor_gradient(grid: Grid, t: np.ndarray, check: bool = True) -> np.ndarray:
    """Partials of every component; new index leads: out[c, ...] = d_c t[...]."""
    return gradient(grid, t, check)


def metric_geometry(grid: Grid, g, check: bool = False) -> MetricGeometry:
    """Finite-difference geometry; valid on nodes and the first ghost layer."""
    g = as_full(g)
    dg = gradient(grid, g, check)
    ddg = hessian_partials(grid, g, check)
    return geometry_from_jets(g, dg, ddg, check=True)


# ---------------------------------------------------------------------------
# public operations on grid fields


def christoffels(grid: Grid, g) -> np.ndarray:
    g = as_full(g)
    ginv, _ = inverse3(g)
    return christoffel_kernel(ginv, gradient(grid, g, check=False))


def ricci(grid: Grid, g) -> np.ndarray:
    return metric_geometry(grid, g).ricci


def scalar_curvature(g, ric) -> np.ndarray:
    ginv, _ = inverse3(as_full(g), check=False)
    return _es("ij...,ij...->...", ginv, as_full(ric))


def hessian(grid: Grid, gamma: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return hessian_kernel(gamma, gradient(grid, phi, check=False),
                          hessian_partials(grid, phi, check=False))


def laplace_scalar(grid: Grid, g, gamma: np.ndarray, phi: np.ndarray) -> np.ndarray:
    ginv, _ = inverse3(as_full(g), check=False)
    return _es("ij...,ij...->...", ginv, hessian(grid, gamma, phi))


def contracted_second_partials(grid: Grid, ginv: np.ndarray, t: np.ndarray,
                               check: bool = False) -> np.ndarray:
    """g^{ab} d_a d_b t for each component of t (leading axes of t kept)."""
    lead = t.ndim - 3
    out = np.zeros_like(t)
    for a in range(3):
        out += ginv[a, a].reshape((1,) * lead + ginv.shape[2:]) * d2(grid, t, a + 1, check)
    c = lambda a, b: 2.0 * ginv[a, b].reshape((1,) * lead + ginv.shape[2:])
    out += c(0, 1) * d_tan(grid, d_tan(grid, t, 1), 2)
    dn = d_norm(grid, t, check)
    out += c(0, 2) * d_tan(grid, dn, 1) + c(1, 2) * d_tan(grid, dn, 2)
    return out


def laplace_tensor(grid: Grid, g, gamma=None, t=None, geom: MetricGeometry | None = None):
    """Covariant Laplacian of a symmetric 2-tensor field."""
    if geom is None:
        geom = metric_geometry(grid, g)
    t = as_full(t)
    return laplace_tensor_kernel(geom.ginv, geom.gamma, geom.dgamma, t,
                                 gradient(grid, t, check=False),
                                 contracted_second_partials(grid, geom.ginv, t))


def covariant_derivative(grid: Grid, gamma: np.ndarray, t) -> np.ndarray:
    t = as_full(t)
    return covariant_kernel(gamma, t, gradient(grid, t, check=False))


def dt_christoffel(grid: Grid, g, k, phi: np.ndarray, gamma=None) -> np.ndarray:
    g, k = as_full(g), as_full(k)
    ginv, _ = inverse3(g, check=False)
    if gamma is None:
        gamma = christoffel_kernel(ginv, gradient(grid, g, check=False))
    return dt_christoffel_kernel(ginv, gamma, k, gradient(grid, k, check=False),
                                 phi, gradient(grid, phi, check=False))


# ---------------------------------------------------------------------------
# tensor utilities


def trace(g, t) -> np.ndarray:
    ginv, _ = inverse3(as_full(g), check=False)
    return _es("ij...,ij...->...", ginv, as_full(t))


def trace_inv(ginv, t) -> np.ndarray:
    return _es("ij...,ij...->...", ginv, t)


def norm2(g, t) -> np.ndarray:
    ginv, _ = inverse3(as_full(g), check=False)
    return norm2_inv(ginv, as_full(t))


def norm2_inv(ginv, t) -> np.ndarray:
    return _es("ia...,jb...,ij...,ab...->...", ginv, ginv, t, t)


def raise_first(ginv, t) -> np.ndarray:
    """T^a_j = g^{ai} T_ij."""
    return _es("ai...,ij...->aj...", ginv, t)


def raise_both(ginv, t) -> np.ndarray:
    return _es("ia...,jb...,ab...->ij...", ginv, ginv, t)


def lower_first(g, t) -> np.ndarray:
    return _es("ai...,ij...->aj...", as_full(g), t)


# ---------------------------------------------------------------------------
# boundary-adapted frame


@dataclass
class NormalFrame:
    """Unit normal N to the level sets of x3 and the dual coframe.

    ``n_up[i]`` = N^i, ``n_low[i]`` = N_i, ``theta[A, i]`` = theta^A_i with
    theta^A(d_B) = delta and theta^A(N) = 0; ``norm`` = sqrt(g^33).
    """
    n_up: np.ndarray
    n_low: np.ndarray
    theta: np.ndarray
    norm: np.ndarray
    q: np.ndarray
    qinv: np.ndarray


class FrameError(ValueError):
    """g^33 is not positive."""


def normal_frame(g, ginv=None) -> NormalFrame:
    g = as_full(g)
    if ginv is None:
        ginv, _ = inverse3(g, check=False)
    g33 = ginv[2, 2]
    if np.any(g33[np.isfinite(g33)] <= 0):
        raise FrameError("degenerate normal: g^33 <= 0")
    norm = np.sqrt(g33)
    n_up = ginv[2] / norm
    n_low = np.zeros_like(n_up)
    n_low[2] = 1.0 / norm
    theta = np.zeros((2, 3) + g.shape[2:])
    for a in range(2):
        theta[a, a] = 1.0
        theta[a] -= n_up[a] * n_low
    q = g[:2, :2]
    qdet = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
    qinv = np.empty_like(q)
    qinv[0, 0], qinv[1, 1] = q[1, 1] / qdet, q[0, 0] / qdet
    qinv[0, 1] = qinv[1, 0] = -q[0, 1] / qdet
    return NormalFrame(n_up, n_low, theta, norm, q, qinv)


@dataclass
class FrameComponents:
    k_ab: np.ndarray   # k(d_A, d_B), shape (2, 2, ...)
    k_na: np.ndarray   # k(N, d_A), shape (2, ...)
    k_nn: np.ndarray

    def mixed(self, frame: NormalFrame) -> np.ndarray:
        """k_A^B = q^{BC} k_AC, index order [A, B]."""
        return _es("bc...,ac...->ab...", frame.qinv, self.k_ab)

    def tangential_trace(self, frame: NormalFrame) -> np.ndarray:
        return _es("ab...,ab...->...", frame.qinv, self.k_ab)


def frame_project(t, frame: NormalFrame) -> FrameComponents:
    t = as_full(t)
    k_ab = t[:2, :2].copy()
    k_na = _es("i...,ia...->a...", frame.n_up, t[:, :2])
    k_nn = _es("i...,j...,ij...->...", frame.n_up, frame.n_up, t)
    return FrameComponents(k_ab, k_na, k_nn)


def frame_reconstruct(comp: FrameComponents, frame: NormalFrame) -> np.ndarray:
    th, nl = frame.theta, frame.n_low
    out = _es("ai...,bj...,ab...->ij...", th, th, comp.k_ab)
    cross = _es("i...,aj...,a...->ij...", nl, th, comp.k_na)
    out += cross + np.swapaxes(cross, 0, 1)
    out += _es("i...,j...->ij...", nl, nl) * comp.k_nn
    return out
