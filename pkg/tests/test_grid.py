import math

import numpy as np
import pytest

from maxslice.grid import (GhostError, GridError, GridSpec, SymTensorField, d2, d_norm, d_tan,
                           extrapolate_ghosts, gradient, integrate_boundary, integrate_volume,
                           make_grid)

from conftest import flat_metric


def test_spacings_and_nodes():
    gr = make_grid(GridSpec(8, 8, 8, x3_min=-1.0))
    assert gr.h3 == pytest.approx(1 / 7, abs=1e-15)
    assert gr.x3[gr.i_inner] == -1.0 and gr.x3[gr.i_outer] == 0.0
    gr4 = make_grid(GridSpec(4, 4, 8))
    assert gr4.h1 == pytest.approx(math.pi / 2)
    np.testing.assert_allclose(gr4.x1, [0, math.pi / 2, math.pi, 3 * math.pi / 2])


@pytest.mark.parametrize("kw", [dict(ghost=1), dict(n1=3), dict(x3_min=0.5), dict(period=0.0)])
def test_invalid_specs(kw):
    base = dict(n1=8, n2=8, n3=8)
    base.update(kw)
    with pytest.raises(GridError):
        make_grid(GridSpec(**base))


def test_ghosts_start_unfilled(grid8):
    a = grid8.empty()
    assert np.isnan(a[..., :grid8.ghost]).all() and np.isnan(a[..., -grid8.ghost:]).all()
    assert (a[..., grid8.nodes] == 0).all()


def test_symmetric_storage():
    f = SymTensorField(np.zeros((6, 2, 2, 2)))
    f[0, 2] = 5.0
    assert (f[2, 0] == 5.0).all()
    full = f.full()
    assert (full == np.swapaxes(full, 0, 1)).all()
    assert (SymTensorField.from_full(full).full() == full).all()


def test_d_tan_constant_and_independent(grid8):
    x1, x2, x3 = grid8.mesh()
    assert np.abs(d_tan(grid8, np.ones(grid8.shape), 1)).max() == 0
    assert np.abs(d_tan(grid8, np.sin(x2), 1)).max() == 0


def test_d_tan_discrete_symbol():
    gr = make_grid(GridSpec(16, 8, 8))
    x1 = gr.mesh()[0]
    h = gr.h1
    np.testing.assert_allclose(d_tan(gr, np.sin(x1), 1), np.cos(x1) * np.sin(h) / h, atol=1e-14)


def test_d_norm_polynomials(grid8):
    x3 = grid8.mesh()[2]
    n = grid8.nodes
    assert np.abs(d_norm(grid8, np.ones(grid8.shape))[..., n]).max() == 0
    np.testing.assert_allclose(d_norm(grid8, x3)[..., n], 1.0, atol=1e-13)
    # Taylor: ((x+h)^3 - (x-h)^3) / 2h = 3x^2 + h^2
    np.testing.assert_allclose(d_norm(grid8, x3 ** 3)[..., n], 3 * x3[..., n] ** 2 + grid8.h3 ** 2,
                               atol=1e-13)


def test_unfilled_ghost_detected(grid8):
    with pytest.raises(GhostError):
        d_norm(grid8, grid8.empty())
    with pytest.raises(GhostError):
        d2(grid8, grid8.empty(), 3)


def test_second_derivative_exact_on_quadratics(grid8):
    x3 = grid8.mesh()[2]
    np.testing.assert_allclose(d2(grid8, x3 ** 2, 3)[..., grid8.nodes], 2.0, atol=1e-11)


def test_cubic_extrapolation_exact_on_cubics(grid8):
    x3 = grid8.mesh()[2]
    f = x3 ** 3 - 2 * x3
    a = grid8.empty()
    a[..., grid8.nodes] = f[..., grid8.nodes]
    extrapolate_ghosts(grid8, a, 3)
    np.testing.assert_allclose(a, f, atol=1e-12)
    a2 = grid8.empty()
    a2[..., grid8.nodes] = (x3 ** 2)[..., grid8.nodes]
    np.testing.assert_allclose(extrapolate_ghosts(grid8, a2, 2), x3 ** 2, atol=1e-12)


def test_gradient_shape(grid8):
    x1, x2, x3 = grid8.mesh()
    assert gradient(grid8, x3).shape == (3,) + grid8.shape


def test_integrate_volume(grid8):
    one = np.ones(grid8.shape)
    area = (2 * math.pi) ** 2
    assert integrate_volume(grid8, one, flat_metric(grid8)) == pytest.approx(area, rel=1e-14)
    assert integrate_volume(grid8, one, flat_metric(grid8, 4.0)) == pytest.approx(8 * area, rel=1e-14)
    x1 = grid8.mesh()[0]
    assert integrate_volume(grid8, np.sin(x1) ** 2, flat_metric(grid8)) == pytest.approx(area / 2,
                                                                                      rel=1e-14)


def test_integrate_boundary(grid8):
    q = np.zeros((2, 2, 8, 8))
    q[0, 0] = q[1, 1] = 1.0
    area = (2 * math.pi) ** 2
    f = np.ones((8, 8))
    assert integrate_boundary(grid8, f, q) == pytest.approx(area, rel=1e-14)
    omega = math.sqrt(2.0)
    # area form sqrt(det q): Omega^2 q doubles the area, Omega^4 q quadruples it
    assert integrate_boundary(grid8, f, omega ** 2 * q) == pytest.approx(2 * area, rel=1e-14)
    assert integrate_boundary(grid8, f, omega ** 4 * q) == pytest.approx(4 * area, rel=1e-14)
    x1 = np.meshgrid(grid8.x1, grid8.x2, indexing="ij")[0]
    assert abs(integrate_boundary(grid8, np.sin(x1), q)) < 1e-14
