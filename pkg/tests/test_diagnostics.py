import math

import numpy as np
import pytest

from maxslice.boundary import BoundaryData
from maxslice.diagnostics import (DiagnosticsError, DiagnosticsRecord, SpacetimeRicci,
                                  analytic_state, compute_record, convergence_rate,
                                  einstein_tensor, energy_k, energy_total, hamiltonian, l2,
                                  momentum, propagation_check, spacetime_ricci, trace_identity)
from maxslice.evolution import State, System, initial_kdot, initial_state, run_steps
from maxslice.grid import GridSpec, SymTensorField, make_grid
from maxslice.lapse import solve_lapse

from conftest import flat_metric, nodes


def state_of(grid, g, k, v, t=0.0, phi=None):
    phi = np.ones(grid.shape) if phi is None else phi
    return State(t, SymTensorField.from_full(g), SymTensorField.from_full(k),
                 SymTensorField.from_full(v), phi, np.zeros(grid.shape))


def flat_run(grid, nsteps=2):
    sy = System(grid, BoundaryData(grid))
    st = initial_state(sy, flat_metric(grid), np.zeros((3, 3) + grid.shape))
    return sy, run_steps(sy, st, 0.05, nsteps)


def test_record_columns_in_order():
    cols = DiagnosticsRecord.columns()
    assert cols[:5] == ["t", "ham_norm", "mom_norm_1", "mom_norm_2", "mom_norm_3"]
    assert cols[-4:] == ["bc_khat", "bc_knn", "bc_kna", "bc_kcc"]
    assert len(cols) == 19


def test_flat_record_is_zero(grid8):
    sy, states = flat_run(grid8)
    rec = compute_record(grid8, states, sy.bdata, 0.0)
    vals = rec.values()
    assert vals[0] == pytest.approx(0.1)
    assert all(x == 0.0 for x in vals[1:])
    assert propagation_check(grid8, states) == 0.0


def test_hamiltonian_of_pure_trace_k(grid8):
    c = 0.3
    g = flat_metric(grid8)
    k = flat_metric(grid8, c)
    # R = 0, |k|^2 = 3c^2, (tr k)^2 = 9c^2
    assert np.allclose(nodes(grid8, hamiltonian(grid8, g, k)), 6 * c ** 2, atol=1e-15)
    assert np.abs(nodes(grid8, momentum(grid8, g, k))).max() == 0.0


def test_second_variation_makes_spatial_ricci_vanish(grid8):
    g, k, _ = analytic_state(grid8, 2)
    phi = solve_lapse(grid8, g, k)
    v = initial_kdot(grid8, g, k, phi)
    ric = spacetime_ricci(grid8, g, k, v, phi)
    assert np.abs(nodes(grid8, ric.rij)).max() < 1e-12
    assert np.abs(nodes(grid8, ric.r00)).max() > 1e-3


def test_energy_of_constant_normal_rate(grid8):
    w = 0.4
    g = flat_metric(grid8)
    v = np.zeros_like(g)
    v[2, 2] = w
    st = state_of(grid8, g, np.zeros_like(g), v)
    vol = (2 * math.pi) ** 2 * 1.0
    assert energy_k(grid8, [st]) == pytest.approx(w ** 2 * vol, rel=1e-13)


def test_energy_scales_quadratically(grid8):
    g, k, v = analytic_state(grid8, 0)
    e1 = energy_k(grid8, [state_of(grid8, g, k, v)])
    e3 = energy_k(grid8, [state_of(grid8, g, 3 * k, 3 * v)])
    assert e1 > 0 and e3 == pytest.approx(9 * e1, rel=1e-12)


def test_energy_r1_needs_two_slices(grid8):
    g, k, v = analytic_state(grid8, 0)
    st = state_of(grid8, g, k, v)
    with pytest.raises(DiagnosticsError):
        energy_k(grid8, [st], r=1)
    with pytest.raises(ValueError):
        energy_k(grid8, [st], r=2)
    later = state_of(grid8, g, 1.01 * k, v, t=0.1)
    assert energy_k(grid8, [st, later], r=1) > energy_k(grid8, [later], r=0)


def test_energy_total_flat_is_zero(grid8):
    _, states = flat_run(grid8, 1)
    assert energy_total(grid8, states) == 0.0
    assert energy_total(grid8, states, r=1) == 0.0


def test_trace_identity_flat_and_violating_lapse():
    gr = make_grid(GridSpec(8, 8, 9))
    g = flat_metric(gr)
    z = np.zeros_like(g)
    assert trace_identity(gr, g, z, z).residual == 0.0
    g, k, v = analytic_state(gr, 0)
    good = trace_identity(gr, g, k, v).residual
    bad = trace_identity(gr, g, k, v, phi=np.ones(gr.shape)).residual
    assert bad > 0.1 and bad > 20 * good


def test_l2_weights(grid8):
    one = np.ones(grid8.shape)
    assert l2(grid8, one) == pytest.approx(2 * math.pi)
    assert l2(grid8, one, flat_metric(grid8, 4.0)) == pytest.approx(2 * math.pi * 8 ** 0.5)
    assert l2(grid8, one, interior=True) < l2(grid8, one)


def test_einstein_pure_trace_and_gtilde():
    c, shape = 0.5, (2,)
    g = np.eye(3)[:, :, None] * np.ones(shape)
    ric = SpacetimeRicci(c * g, np.full(shape, 3 * c), np.ones((3,) + shape))
    ein = einstein_tensor(ric, g)
    # bold R = tr R_ij - R_00 = 0, so G_ij = R_ij
    assert np.allclose(ein.scalar, 0.0) and np.allclose(ein.gij, c * g)
    assert np.array_equal(ein.gtilde, ric.r0i)
    ric2 = SpacetimeRicci(c * g, np.zeros(shape), np.zeros((3,) + shape))
    ein2 = einstein_tensor(ric2, g, dtrk=np.ones((3,) + shape))
    assert np.allclose(ein2.gij, -0.5 * c * g) and np.allclose(ein2.gtilde, -0.5)


def test_convergence_rate_examples():
    est = convergence_rate([1.0, 0.25, 0.0625])
    assert est.rates == pytest.approx([2.0, 2.0]) and est.monotone
    assert est.rate == pytest.approx(2.0)
    assert not convergence_rate([1.0, 1.1]).monotone
    assert convergence_rate([8.0, 1.0], ratio=8.0).rates == pytest.approx([1.0])
    assert math.isnan(convergence_rate([1.0, 0.0]).rates[0])
    with pytest.raises(ValueError):
        convergence_rate([1.0])


def test_propagation_needs_three_slices(grid8):
    _, states = flat_run(grid8, 1)
    with pytest.raises(DiagnosticsError):
        propagation_check(grid8, states)
