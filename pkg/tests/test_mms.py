import numpy as np
import pytest

from maxslice.boundary import BoundaryData, bc_residuals
from maxslice.evolution import EvolveConfig, System, evolve, initial_state
from maxslice.geometry import inverse3, norm2_inv
from maxslice.grid import GridSpec, make_grid
from maxslice.lapse import solve_dirichlet
from maxslice.mms import ManufacturedSolution, MMSSources, mms_source

from conftest import nodes


def mms_grid(n, n3=None):
    return make_grid(GridSpec(n, n, n3 or n + 1, period=1.0))


def test_zero_amplitude_is_flat_and_unforced():
    gr = mms_grid(8)
    ex = ManufacturedSolution(amp=0.0)
    g, k, v, phi = ex.state_arrays(gr, 0.3)
    assert np.array_equal(g, np.broadcast_to(np.eye(3)[:, :, None, None, None], g.shape))
    assert np.abs(k).max() == 0.0 and np.abs(v).max() == 0.0 and (phi == 1.0).all()
    src = mms_source(gr, ex, 0.3)
    for name in ("metric", "lapse", "lapse_rate", "wave"):
        assert np.abs(src[name]).max() == 0.0


def test_sources_scale_linearly_for_small_amplitude():
    gr = mms_grid(8)
    a = mms_source(gr, ManufacturedSolution(amp=1e-4), 0.2)
    b = mms_source(gr, ManufacturedSolution(amp=2e-4), 0.2)
    for name in ("lapse", "wave"):
        ratio = np.abs(b[name]).max() / np.abs(a[name]).max()
        assert ratio == pytest.approx(2.0, rel=1e-3)


def test_first_and_second_variation_by_construction():
    gr = mms_grid(8)
    ex = ManufacturedSolution()
    X = gr.mesh()
    t, e = 0.4, 1e-5
    f = ex.fields(t, X)
    dg = (ex.fields(t + e, X)["g"] - ex.fields(t - e, X)["g"]) / (2 * e)
    dk = (ex.fields(t + e, X)["k"] - ex.fields(t - e, X)["k"]) / (2 * e)
    assert np.abs(dg + 2 * f["phi"] * f["k"]).max() < 1e-9
    assert np.abs(dk - f["phi"] * f["v"]).max() < 1e-9


def test_phi_is_one_on_both_faces():
    gr = mms_grid(8)
    phi = ManufacturedSolution().state_arrays(gr, 0.7)[3]
    assert np.allclose(phi[..., gr.i_inner], 1.0, atol=1e-15)
    assert np.allclose(phi[..., gr.i_outer], 1.0, atol=1e-15)


def test_forced_lapse_solve_recovers_exact_lapse():
    errs = []
    for n in (8, 16):
        gr = mms_grid(n, 2 * n + 1)
        ex = ManufacturedSolution()
        g, k, _, phi = ex.state_arrays(gr, 0.25)
        ginv, _ = inverse3(g)
        w = solve_dirichlet(gr, g, norm2_inv(ginv, k), MMSSources(gr, ex).lapse(0.25))
        errs.append(np.abs(nodes(gr, w - phi)).max())
    assert errs[1] < 1e-3
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_exact_state_meets_overridden_boundary_data():
    res = []
    for n in (8, 16):
        gr = mms_grid(n, 2 * n + 1)
        ex = ManufacturedSolution()
        g, k, _, _ = ex.state_arrays(gr, 0.1)
        bd = BoundaryData(gr, override=lambda face, t, gr=gr: ex.face_targets(gr, face, t))
        r = bc_residuals(gr, g, k, 0.1, bd)
        assert r["khat"] < 1e-14 and r["knn"] < 1e-14
        res.append(max(r["kna"], r["kcc"], r["ntrk"]))
    assert res[0] / res[1] > 3.0


def test_short_forced_run_tracks_exact_solution():
    gr = mms_grid(8, 9)
    ex = ManufacturedSolution()
    bd = BoundaryData(gr, override=lambda face, t: ex.face_targets(gr, face, t))
    sy = System(gr, bd, sources=MMSSources(gr, ex))
    g, k, v, _ = ex.state_arrays(gr, 0.0)
    st = initial_state(sy, g, k, v)
    for st in evolve(sy, st, EvolveConfig(t_final=0.1, cfl=0.5)):
        pass
    ge, ke, _, pe = ex.state_arrays(gr, st.t)
    assert np.abs(nodes(gr, st.g.full() - ge)).max() < 1e-2
    assert np.abs(nodes(gr, st.k.full() - ke)).max() < 2e-2
    assert np.abs(nodes(gr, st.phi - pe)).max() < 2e-3
