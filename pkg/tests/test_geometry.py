import numpy as np
import pytest
import sympy as sp

from maxslice.geometry import (MetricError, christoffels, dt_christoffel, frame_project,
                               frame_reconstruct, hessian, inverse3, laplace_scalar,
                               laplace_tensor, norm2, normal_frame, ricci, trace)
from maxslice.grid import GridSpec, make_grid

from conftest import diag_metric, flat_metric, nodes

X = sp.symbols("x1 x2 x3", real=True)


def sym_ricci(gm):
    """Symbolic Ricci tensor of a 3-metric, used as an independent oracle."""
    gi = gm.inv()
    gam = [[[sum(gi[a, d] * (sp.diff(gm[d, b], X[c]) + sp.diff(gm[d, c], X[b])
                             - sp.diff(gm[b, c], X[d])) for d in range(3)) / 2
             for c in range(3)] for b in range(3)] for a in range(3)]
    r = sp.zeros(3, 3)
    for b in range(3):
        for c in range(3):
            r[b, c] = (sum(
                sp.diff(gam[a][b][c], X[a]) - sp.diff(gam[a][a][b], X[c])
                + sum(gam[a][a][d] * gam[d][b][c] - gam[a][c][d] * gam[d][a][b] for d in range(3))
                for a in range(3)))
    return r, gam


def on_grid(grid, expr):
    f = sp.lambdify(X, expr, "numpy")
    return np.broadcast_to(np.asarray(f(*grid.mesh()), dtype=float), grid.shape)


def max_err(grid, a, b):
    return np.abs(nodes(grid, a - b)).max()


def test_flat_and_scaled_identity_have_no_connection(grid8):
    for s in (1.0, 4.0):
        gam = christoffels(grid8, flat_metric(grid8, s))
        assert np.abs(nodes(grid8, gam)).max() == 0.0
        assert np.abs(nodes(grid8, ricci(grid8, flat_metric(grid8, s)))).max() == 0.0


def warped(grid):
    x3 = grid.mesh()[2]
    return diag_metric(grid, 1.0, 1.0, (1.0 + x3) ** 2)


def test_warped_normal_christoffel():
    for n in (16, 32):
        gr = make_grid(GridSpec(8, 8, n + 1, x3_min=-0.5))
        gam = christoffels(gr, warped(gr))
        exact = 1.0 / (1.0 + gr.mesh()[2])
        # the normal partial of a quadratic is exact, so only rounding remains
        assert max_err(gr, gam[2, 2, 2], exact) < 1e-13
        others = gam.copy()
        others[2, 2, 2] = 0.0
        assert np.abs(nodes(gr, others)).max() < 1e-14


def test_warped_metric_is_flat():
    gr = make_grid(GridSpec(8, 8, 33, x3_min=-0.5))
    assert np.abs(nodes(gr, ricci(gr, warped(gr)))).max() < 1e-3


@pytest.mark.parametrize("lam", [0.4])
def test_conformally_flat_ricci(lam):
    r_exact, _ = sym_ricci(sp.exp(2 * lam * X[2]) * sp.eye(3))
    assert r_exact[0, 0] == pytest.approx(-lam ** 2) and r_exact[2, 2] == 0
    errs = []
    for n in (16, 32):
        gr = make_grid(GridSpec(8, 8, n + 1))
        x3 = gr.mesh()[2]
        e = np.exp(2 * lam * x3)
        ric = ricci(gr, diag_metric(gr, e, e, e))
        errs.append(max(max_err(gr, ric[i, j], on_grid(gr, r_exact[i, j]))
                        for i in range(3) for j in range(3)))
    assert errs[1] < 1e-3
    assert np.log2(errs[0] / errs[1]) > 1.9


def test_ricci_matches_symbolic_oracle_general_metric():
    gm = sp.Matrix([[1 + sp.sin(X[0]) * X[2] / 5, sp.cos(X[1]) / 10, 0],
                    [sp.cos(X[1]) / 10, 1, X[2] ** 2 / 10],
                    [0, X[2] ** 2 / 10, 1 + sp.cos(X[0] + X[1]) / 10]])
    r_exact, _ = sym_ricci(gm)
    errs = []
    for n in (16, 32):
        gr = make_grid(GridSpec(n, n, n + 1))
        g = np.empty((3, 3) + gr.shape)
        for i in range(3):
            for j in range(3):
                g[i, j] = on_grid(gr, gm[i, j])
        ric = ricci(gr, g)
        errs.append(max(max_err(gr, ric[i, j], on_grid(gr, r_exact[i, j]))
                        for i in range(3) for j in range(3)))
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_hessian_of_normal_quadratic():
    gr = make_grid(GridSpec(8, 8, 17, x3_min=-0.5))
    x3 = gr.mesh()[2]
    g = warped(gr)
    hs = hessian(gr, christoffels(gr, g), x3 ** 2)
    # d3d3 phi - Gamma^3_33 d3 phi; quadratic partials are exact
    exact = 2.0 - 2.0 * x3 / (1.0 + x3)
    assert max_err(gr, hs[2, 2], exact) < 5e-3
    assert np.abs(nodes(gr, hs[0, 0])).max() < 1e-14


def test_laplace_scalar_discrete_symbol(grid16):
    x1 = grid16.mesh()[0]
    g = flat_metric(grid16)
    phi = np.sin(x1)
    h = grid16.h1
    lap = laplace_scalar(grid16, g, christoffels(grid16, g), phi)
    expected = -np.sin(x1) * (2 - 2 * np.cos(h)) / h ** 2
    assert max_err(grid16, lap, expected) < 1e-13


def test_laplace_of_metric_vanishes(grid16):
    x1, _, x3 = grid16.mesh()
    g = diag_metric(grid16, 1 + 0.1 * np.sin(x1), 1.0, 1 + 0.1 * x3 ** 2)
    # the connection terms cancel the partials identically, not just to truncation order
    assert np.abs(nodes(grid16, laplace_tensor(grid16, g, t=g))).max() < 1e-14


def test_dt_christoffel_examples(grid8):
    g = flat_metric(grid8)
    one = np.ones(grid8.shape)
    assert np.abs(nodes(grid8, dt_christoffel(grid8, g, np.zeros_like(g), one))).max() == 0.0
    # k = g with constant lapse: g is parallel, so the rate vanishes
    assert np.abs(nodes(grid8, dt_christoffel(grid8, g, g, one))).max() == 0.0
    k = np.zeros_like(g)
    k[2, 2] = grid8.mesh()[2]
    rate = dt_christoffel(grid8, g, k, one)
    assert np.allclose(nodes(grid8, rate[2, 2, 2]), -1.0, atol=1e-13)
    rate[2, 2, 2] = 0.0
    assert np.abs(nodes(grid8, rate)).max() < 1e-13


def test_trace_and_norm():
    g = np.eye(3)
    assert trace(g, g) == pytest.approx(3.0)
    assert norm2(g, g) == pytest.approx(3.0)
    assert norm2(2 * g, g) == pytest.approx(0.75)


def test_singular_metric_raises():
    g = np.eye(3)[:, :, None] * np.ones(4)
    g[2, 2, 1] = 0.0
    with pytest.raises(MetricError):
        inverse3(g)


def test_normal_frames():
    g = np.eye(3)
    fr = normal_frame(g)
    assert np.allclose(fr.n_up, [0, 0, 1])
    gd = np.diag([1.0, 2.0, 4.0])
    assert np.allclose(normal_frame(gd).n_up, [0, 0, 0.5])
    gs = np.array([[1.0, 0.0, 0.3], [0.0, 1.0, 0.0], [0.3, 0.0, 2.0]])
    ginv = np.linalg.inv(gs)
    fr = normal_frame(gs)
    assert np.allclose(fr.n_up, ginv[2] / np.sqrt(ginv[2, 2]), atol=1e-15)
    assert fr.n_up @ gs @ fr.n_up == pytest.approx(1.0)
    # tangent vectors are orthogonal to N
    assert np.allclose(gs[:2] @ fr.n_up, 0.0, atol=1e-15)


def test_frame_round_trip():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 3))
    g = np.eye(3) + 0.1 * (a + a.T)
    t = rng.normal(size=(3, 3))
    t = t + t.T
    fr = normal_frame(g)
    comp = frame_project(t, fr)
    assert comp.k_nn == pytest.approx(fr.n_up @ t @ fr.n_up)
    assert np.allclose(frame_reconstruct(comp, fr), t, atol=1e-14)
