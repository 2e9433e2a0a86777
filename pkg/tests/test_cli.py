import json

import numpy as np
import pytest

from maxslice.cli import (EXIT_COMPAT, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, ConfigError,
                          builtin_initial_data, build_config, main, parse_config, read_config_text,
                          read_snapshot, serialize_config)
from maxslice.diagnostics import DiagnosticsRecord
from maxslice.grid import GridSpec, make_grid

SMALL = ["--grid.n1", "8", "--grid.n2", "8", "--grid.n3", "8"]


def run_cli(tmp_path, *extra, name="out"):
    out = tmp_path / name
    status = main(SMALL + ["--output.dir", str(out), *extra])
    return status, out


def manifest(out):
    return json.loads((out / "run_manifest.json").read_text())


def test_minimal_config_defaults():
    cfg = build_config({"grid.n1": "8", "grid.n2": "8", "grid.n3": "9"})
    assert cfg.evolve.cfl == 0.25
    assert cfg.elliptic.rel_tol == 1e-10
    assert cfg.energy_r == 0
    assert cfg.evolve.mode == "evolve" and cfg.boundary_family.kind == "constant"


def test_serialize_round_trip():
    cfg = build_config({"grid.n1": "8", "grid.n2": "8", "grid.n3": "9",
                        "boundary_family.kind": "diag-exponential",
                        "boundary_family.lambda": "0.125", "evolve.t_final": "0.3"})
    again = build_config(read_config_text(serialize_config(cfg)))
    assert again == cfg
    assert again.boundary_family.lam == 0.125


def test_config_errors_name_the_key():
    base = {"grid.n1": "8", "grid.n2": "8", "grid.n3": "9"}
    with pytest.raises(ConfigError, match="evolve.cfl"):
        build_config({**base, "evolve.cfl": "fast"})
    with pytest.raises(ConfigError, match="bogus.key"):
        build_config({**base, "bogus.key": "1"})
    with pytest.raises(ConfigError, match="grid.n3"):
        build_config({"grid.n1": "8", "grid.n2": "8"})
    with pytest.raises(ConfigError):
        read_config_text("grid.n1 8")


def test_config_file_and_flag_override(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 9  # normal nodes\nevolve.cfl = 0.5\n")
    cfg, _ = parse_config(["--config", str(path), "--evolve.cfl", "0.3", "--mode", "mms"])
    assert cfg.evolve.cfl == 0.3 and cfg.evolve.mode == "mms" and cfg.grid.n3 == 9


def test_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("grid.n1 = 8\ngrid.n2 = 8\ngrid.n3 = 9\nfoo = 1\n")
    assert main(["--config", str(path)]) == EXIT_CONFIG
    assert "foo" in capsys.readouterr().err


def test_flat_run_outputs(tmp_path):
    status, out = run_cli(tmp_path, "--evolve.t_final", "0.2", "--output.snapshots", "true")
    assert status == EXIT_OK
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == ",".join(DiagnosticsRecord.columns())
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    assert rows[0, 0] == 0.0 and rows[-1, 0] == pytest.approx(0.2)
    assert np.abs(rows[:, 1:]).max() < 1e-10
    doc = manifest(out)
    assert doc["exit_status"] == 0 and doc["columns"] == DiagnosticsRecord.columns()
    assert doc["config"]["grid"]["n1"] == 8
    snaps = sorted(out.glob("snapshot_*.bin"))
    assert len(snaps) == len(rows)
    fields = read_snapshot(snaps[-1])
    g11, t = fields["g11"]
    assert t == pytest.approx(0.2)
    assert np.array_equal(g11, np.ones((8, 8, 8)))
    assert np.abs(fields["k13"][0]).max() == 0.0 and (fields["phi"][0] == 1.0).all()


def test_runs_are_deterministic(tmp_path):
    args = ("--initial_data.kind", "perturbed", "--initial_data.epsilon", "1e-3",
            "--initial_data.profile", "tt-conformal", "--evolve.t_final", "0.05")
    a = run_cli(tmp_path, *args, name="a")[1]
    b = run_cli(tmp_path, *args, name="b")[1]
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()


def test_incompatible_family_exit_code(tmp_path):
    status, out = run_cli(tmp_path, "--boundary_family.kind", "diag-exponential",
                          "--boundary_family.lambda", "0.2", "--mode", "compat-check")
    assert status == EXIT_COMPAT
    rep = json.loads((out / "compat_report.json").read_text())
    assert rep["hat"] == pytest.approx(0.2 * 2 ** 0.5)
    assert manifest(out)["exit_status"] == EXIT_COMPAT


def test_solver_failure_exit_code(tmp_path):
    status, out = run_cli(tmp_path, "--initial_data.kind", "perturbed",
                          "--initial_data.epsilon", "0.1", "--elliptic.max_iter", "1",
                          "--elliptic.rel_tol", "1e-14")
    assert status == EXIT_SOLVER
    assert "LapseError" in manifest(out)["results"]["error"]


def test_zero_amplitude_perturbation_is_flat():
    gr = make_grid(GridSpec(8, 8, 9))
    for profile in ("tt-collar", "tt-conformal"):
        g, k = builtin_initial_data("perturbed", gr, 0.0, profile)
        gf, kf = builtin_initial_data("flat", gr)
        assert np.array_equal(g, gf) and np.array_equal(k, kf)


def test_constraint_constant_is_reported(tmp_path):
    status, out = run_cli(tmp_path, "--initial_data.kind", "perturbed",
                          "--initial_data.epsilon", "1e-2", "--evolve.max_steps", "1")
    assert status == EXIT_OK
    rep = manifest(out)["results"]["constraints_t0"]
    assert rep["ham_norm"] > 0 and rep["K"] == pytest.approx(rep["ham_norm"] / 1e-4)


def test_figures_flag(tmp_path):
    pytest.importorskip("matplotlib")
    status, out = run_cli(tmp_path, "--evolve.t_final", "0.1", "--figures")
    assert status == EXIT_OK
    assert (out / "diagnostics.png").stat().st_size > 0
