"""Configuration, run orchestration, built-in initial data and output writers.

Configuration is plain text, one ``dotted.key = value`` per line with ``#``
comments.  Every key is also a long flag of the same name, and flags win
over the file::

    maxslice --config run.cfg --evolve.t_final 0.5 --output.dir out

Outputs land in ``output.dir``: diagnostics.csv, optional snapshots,
rates.csv for the convergence modes, run_manifest.json, and, with
``--figures``, PNG renderings of the CSV files.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field
import json
import logging
import math
from pathlib import Path
import platform
import sys
import time
from typing import Callable, Iterable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .boundary import (BoundaryData, BoundaryError, ConformalBoundaryFamily, ConstantFamily,
                       DiagExponentialFamily, TabulatedFamily, cbd_norm, compatibility_check)
from .diagnostics import (DiagnosticsRecord, analytic_state, compute_record, convergence_rate,
                          hamiltonian, l2, momentum, trace_identity)
from .evolution import (EvolutionError, EvolveConfig, PicardError, State, System, evolve,
                        initial_state, picard_solve, time_grid)
from .grid import GhostError, Grid, GridError, GridSpec, SYM_PAIRS, extrapolate_ghosts, make_grid
from .lapse import EllipticConfig, LapseError, solve_lapse
from .mms import ManufacturedSolution, MMSSources

log = logging.getLogger("maxslice")

EXIT_OK, EXIT_CONFIG, EXIT_COMPAT, EXIT_SOLVER, EXIT_NUMERIC = 0, 2, 3, 4, 5
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Unknown key, bad value or missing required key."""


class CompatibilityError(RuntimeError):
    def __init__(self, msg: str, report: dict):
        super().__init__(msg)
        self.report = report


# ---------------------------------------------------------------------------
# configuration


@dataclass
class InitialDataConfig:
    kind: str = "flat"               # flat | perturbed | file
    epsilon: float = 0.0
    profile: str = "tt-collar"
    path: str = ""


@dataclass
class FamilyConfig:
    kind: str = "constant"           # constant | diag-exponential | file
    lam: float = 0.0
    path: str = ""


@dataclass
class OutputConfig:
    dir: str = "out"
    snapshots: bool = False
    snapshot_cadence: int = 1
    figures: bool = False


@dataclass
class RunConfig:
    grid: GridSpec
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    elliptic: EllipticConfig = field(default_factory=EllipticConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    boundary_family: FamilyConfig = field(default_factory=FamilyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    energy_r: int = 0
    seed: int = 0
    compat_tol: float = 1e-8
    mms_amp: float = 0.1
    trace_states: int = 5
    levels: int = 3

    def validate(self) -> None:
        for part in (self.grid, self.evolve, self.elliptic):
            try:
                part.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.initial_data.kind not in ("flat", "perturbed", "file"):
            raise ConfigError(f"initial_data.kind: unknown kind {self.initial_data.kind!r}")
        if self.initial_data.epsilon < 0:
            raise ConfigError("initial_data.epsilon must be >= 0")
        if self.initial_data.kind == "perturbed" and self.initial_data.profile not in PROFILES:
            raise ConfigError(f"initial_data.profile: unknown profile {self.initial_data.profile!r}")
        if self.initial_data.kind == "file" and not self.initial_data.path:
            raise ConfigError("initial_data.path is required for kind=file")
        if self.boundary_family.kind not in ("constant", "diag-exponential", "file"):
            raise ConfigError(f"boundary_family.kind: unknown kind {self.boundary_family.kind!r}")
        if self.boundary_family.kind == "file" and not self.boundary_family.path:
            raise ConfigError("boundary_family.path is required for kind=file")
        if self.energy_r not in (0, 1):
            raise ConfigError("energy.r must be 0 or 1")
        if self.output.snapshot_cadence < 1:
            raise ConfigError("output.snapshot_cadence must be >= 1")
        if self.levels < 2 or self.trace_states < 1:
            raise ConfigError("convergence.levels must be >= 2 and trace.states >= 1")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# dotted key -> (section attribute or None, field name, parser)
KEYS: dict[str, tuple[str | None, str, Callable[[str], object]]] = {
    "grid.n1": ("grid", "n1", int),
    "grid.n2": ("grid", "n2", int),
    "grid.n3": ("grid", "n3", int),
    "grid.x3_min": ("grid", "x3_min", float),
    "grid.ghost": ("grid", "ghost", int),
    "grid.period": ("grid", "period", float),
    "evolve.t_final": ("evolve", "t_final", float),
    "evolve.cfl": ("evolve", "cfl", float),
    "evolve.diagnostics_cadence": ("evolve", "diagnostics_cadence", int),
    "evolve.mode": ("evolve", "mode", str),
    "evolve.picard_tol": ("evolve", "picard_tol", float),
    "evolve.picard_max_iter": ("evolve", "picard_max_iter", int),
    "evolve.max_steps": ("evolve", "max_steps", _opt_int),
    "elliptic.rel_tol": ("elliptic", "rel_tol", float),
    "elliptic.max_iter": ("elliptic", "max_iter", int),
    "elliptic.initial_guess_policy": ("elliptic", "initial_guess_policy", str),
    "initial_data.kind": ("initial_data", "kind", str),
    "initial_data.epsilon": ("initial_data", "epsilon", float),
    "initial_data.profile": ("initial_data", "profile", str),
    "initial_data.path": ("initial_data", "path", str),
    "boundary_family.kind": ("boundary_family", "kind", str),
    "boundary_family.lambda": ("boundary_family", "lam", float),
    "boundary_family.path": ("boundary_family", "path", str),
    "output.dir": ("output", "dir", str),
    "output.snapshots": ("output", "snapshots", _bool),
    "output.snapshot_cadence": ("output", "snapshot_cadence", int),
    "output.figures": ("output", "figures", _bool),
    "energy.r": (None, "energy_r", int),
    "seed": (None, "seed", int),
    "compat.tol": (None, "compat_tol", float),
    "mms.amp": (None, "mms_amp", float),
    "trace.states": (None, "trace_states", int),
    "convergence.levels": (None, "levels", int),
}
REQUIRED = ("grid.n1", "grid.n2", "grid.n3")


def read_config_text(text: str, origin: str = "<text>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(values: dict[str, str]) -> RunConfig:
    """RunConfig from raw strings; names the offending key on any failure."""
    for key in values:
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
    parsed: dict[str, object] = {}
    for key, text in values.items():
        try:
            parsed[key] = KEYS[key][2](text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key {key!r}: cannot parse {text!r} ({exc})") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    grid_kw = {KEYS[k][1]: v for k, v in parsed.items() if KEYS[k][0] == "grid"}
    cfg = RunConfig(grid=GridSpec(**grid_kw))
    for key, value in parsed.items():
        section, name, _ = KEYS[key]
        if section == "grid":
            continue
        setattr(getattr(cfg, section) if section else cfg, name, value)
    try:
        cfg.validate()
    except GridError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of build_config: every key, one per line."""
    lines = []
    for key, (section, name, _) in KEYS.items():
        value = getattr(getattr(cfg, section) if section else cfg, name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif value is None:
            text = "none"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxslice", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--mode", dest="evolve.mode", help="alias of --evolve.mode")
    p.add_argument("--figures", dest="output.figures", action="store_const", const="true",
                   help="also render PNG figures next to the CSV files")
    p.add_argument("-v", "--verbose", action="store_true")
    for key in KEYS:
        if key in ("evolve.mode", "output.figures"):
            continue
        p.add_argument(f"--{key}", dest=key, metavar=key.split(".")[-1].upper())
    p.add_argument("--output.figures", dest="output.figures")
    p.add_argument("--evolve.mode", dest="evolve.mode")
    return p


def parse_config(argv: Iterable[str] | None = None) -> tuple[RunConfig, argparse.Namespace]:
    """Parse flags (and the file named by --config) into a RunConfig."""
    ns = _arg_parser().parse_args(list(argv) if argv is not None else None)
    values: dict[str, str] = {}
    if ns.config:
        path = Path(ns.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(read_config_text(text, str(path)))
    for key in KEYS:
        flag = getattr(ns, key, None)
        if flag is not None:
            values[key] = flag
    return build_config(values), ns


# ---------------------------------------------------------------------------
# initial data and boundary families


def _bump(grid: Grid) -> np.ndarray:
    """sin^4 of the normalised collar coordinate: vanishes to third order at both faces."""
    L = -grid.spec.x3_min
    s = (grid.x3 - grid.spec.x3_min) / L
    return np.sin(np.pi * s) ** 4


def _tt_collar(grid: Grid, eps: float):
    """Flat g and a transverse traceless k in the tangential block, depending on x3 only.

    k_11 = -k_22 = eps b(x3), k_12 = eps b(x3) / 2.  div k = 0 and tr k = 0
    exactly on flat g, so the only constraint defect is the O(eps^2)
    Hamiltonian term -|k|^2.
    """
    g = np.zeros((3, 3) + grid.shape)
    for i in range(3):
        g[i, i] = 1.0
    k = np.zeros_like(g)
    b = np.broadcast_to(eps * _bump(grid), grid.shape)
    k[0, 0], k[1, 1] = b, -b
    k[0, 1] = k[1, 0] = 0.5 * b
    return g, k


def conformal_factor(grid: Grid, eps: float, tol: float = 1e-13) -> np.ndarray:
    """psi on the x3 nodes and ghosts with psi'' = -|A|^2 psi^-7 / 8, psi = 1 on both faces.

    |A|^2 = 5/2 eps^2 b^2 is the flat norm of the tt-collar tensor.  Shooting
    on psi'(x3_min) with DOP853; the integration runs both ways from the inner
    face so the ghost layers come from the same smooth solution.
    """
    x0 = grid.spec.x3_min
    L = -x0

    def rhs(x, y):
        b = np.sin(np.pi * (x - x0) / L) ** 4
        return [y[1], -0.3125 * eps ** 2 * b ** 2 * y[0] ** -7]

    def run(p, end):
        return solve_ivp(rhs, (x0, end), [1.0, p], method="DOP853", rtol=tol, atol=tol * 1e-2,
                         dense_output=True)

    def miss(p):
        return run(p, 0.0).y[0, -1] - 1.0

    p = brentq(miss, -1.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps) if eps else 0.0
    x = grid.x3
    fwd, bwd = run(p, float(x[-1])), run(p, float(x[0]))
    return np.where(x >= x0, fwd.sol(np.maximum(x, x0))[0], bwd.sol(np.minimum(x, x0))[0])


def _tt_conformal(grid: Grid, eps: float):
    """Constraint-satisfying variant of tt-collar: g = psi^4 delta, k = psi^-2 A.

    With A the tt-collar tensor (traceless and divergence-free on flat
    space), k is traceless and divergence-free for g, and the Hamiltonian
    constraint reduces to the ODE solved by ``conformal_factor``.
    """
    _, a = _tt_collar(grid, eps)
    psi = np.broadcast_to(conformal_factor(grid, eps), grid.shape)
    g = np.zeros_like(a)
    for i in range(3):
        g[i, i] = psi ** 4
    return g, a * psi ** -2


PROFILES = {"tt-collar": _tt_collar, "tt-conformal": _tt_conformal}


def builtin_initial_data(kind: str, grid: Grid, epsilon: float = 0.0,
                         profile: str = "tt-collar", path: str = "") -> tuple[np.ndarray, np.ndarray]:
    """(g, k) on the full grid for flat, perturbed(eps, profile) or file data."""
    if kind == "flat":
        return _tt_collar(grid, 0.0)
    if kind == "perturbed":
        if profile not in PROFILES:
            raise ConfigError(f"initial_data.profile: unknown profile {profile!r}")
        return PROFILES[profile](grid, epsilon)
    if kind == "file":
        fields_ = read_snapshot(path)
        g = np.full((3, 3) + grid.shape, np.nan)
        k = g.copy()
        for i, j in SYM_PAIRS:
            for name, arr in (("g", g), ("k", k)):
                key = f"{name}{i + 1}{j + 1}"
                if key not in fields_:
                    raise ConfigError(f"initial_data.path: field {key} missing")
                data, _ = fields_[key]
                if data.shape != grid.node_shape:
                    raise ConfigError(f"initial_data.path: {key} has shape {data.shape}, "
                                      f"grid nodes are {grid.node_shape}")
                arr[i, j, ..., grid.nodes] = data
                arr[j, i, ..., grid.nodes] = data
        return g, k
    raise ConfigError(f"initial_data.kind: unknown kind {kind!r}")


def constraint_report(grid: Grid, g, k, epsilon: float) -> dict:
    """Constraint norms and their ratio to eps^2 (the reported K)."""
    ham = l2(grid, hamiltonian(grid, g, k))
    mom = max(l2(grid, m) for m in momentum(grid, g, k))
    K = max(ham, mom) / epsilon ** 2 if epsilon > 0 else 0.0
    return {"ham_norm": ham, "mom_norm": mom, "K": K}


def make_family(cfg: FamilyConfig) -> ConformalBoundaryFamily:
    if cfg.kind == "constant":
        return ConstantFamily()
    if cfg.kind == "diag-exponential":
        return DiagExponentialFamily(cfg.lam)
    try:
        return TabulatedFamily.from_file(cfg.path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"boundary_family.path: {exc}") from exc


# ---------------------------------------------------------------------------
# writers


def fmt(x: float) -> str:
    return "%.17g" % x


class CsvWriter:
    """Comma-separated, UTF-8, LF, header first; values with 17 significant digits."""

    def __init__(self, path: Path, columns: list[str]):
        self.path = path
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(",".join(columns) + "\n")

    def row(self, values) -> None:
        self.fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in values) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_snapshot(path: Path, grid: Grid, state: State) -> None:
    """Node values of every field: header line then little-endian float64, row-major."""
    g, k, v = state.arrays()
    blocks = []
    for name, arr in (("g", g), ("k", k), ("v", v)):
        for i, j in SYM_PAIRS:
            blocks.append((f"{name}{i + 1}{j + 1}", arr[i, j, ..., grid.nodes]))
    blocks.append(("phi", state.phi[..., grid.nodes]))
    if state.phidot is not None:
        blocks.append(("phidot", state.phidot[..., grid.nodes]))
    with open(path, "wb") as fh:
        for name, a in blocks:
            shape = ",".join(str(s) for s in a.shape)
            fh.write(f"FIELD name={name} shape={shape} t={fmt(state.t)}\n".encode("utf-8"))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes(order="C"))


def read_snapshot(path) -> dict[str, tuple[np.ndarray, float]]:
    data = Path(path).read_bytes()
    out = {}
    pos = 0
    while pos < len(data):
        end = data.index(b"\n", pos)
        head = data[pos:end].decode("utf-8").split()
        if not head or head[0] != "FIELD":
            raise ValueError(f"{path}: bad snapshot header at byte {pos}")
        kv = dict(item.split("=", 1) for item in head[1:])
        shape = tuple(int(s) for s in kv["shape"].split(","))
        n = int(np.prod(shape)) * 8
        arr = np.frombuffer(data[end + 1:end + 1 + n], dtype="<f8").reshape(shape)
        out[kv["name"]] = (arr.copy(), float(kv["t"]))
        pos = end + 1 + n
    return out


def _versions() -> dict:
    import scipy
    import sympy
    from . import __version__
    return {"maxslice": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "sympy": sympy.__version__}


def write_manifest(out: Path, cfg: RunConfig, status: int, info: dict) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in asdict(cfg).items()},
        "config_text": serialize_config(cfg),
        "columns": DiagnosticsRecord.columns(),
        "exit_status": status,
        "versions": _versions(),
        "results": info,
    }
    with open(out / "run_manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# runs


class Run:
    """One configured run; ``execute`` dispatches on evolve.mode."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output.dir)
        self.info: dict = {}

    # -- shared pieces ----------------------------------------------------
    def _system(self, grid: Grid) -> System:
        fam = make_family(self.cfg.boundary_family)
        bdata = BoundaryData(grid, fam, fam)
        return System(grid, bdata, self.cfg.elliptic)

    def _initial(self, grid: Grid, system: System) -> State:
        """Initial state; compatibility is checked on the raw data, before any projection."""
        idc = self.cfg.initial_data
        g, k = builtin_initial_data(idc.kind, grid, idc.epsilon, idc.profile, idc.path)
        for a in (g, k):
            if not np.all(np.isfinite(a)):
                extrapolate_ghosts(grid, a, 3)
        self.info["constraints_t0"] = constraint_report(grid, g, k, idc.epsilon)
        phi = extrapolate_ghosts(grid, solve_lapse(grid, g, k, self.cfg.elliptic), 3)
        rep = compatibility_check(grid, g, k, phi, system.bdata).as_dict()
        self.info["compatibility"] = rep
        if max(rep.values()) > self.cfg.compat_tol:
            raise CompatibilityError(
                f"initial data incompatible with the boundary family "
                f"(max residual {max(rep.values()):.3e} > {self.cfg.compat_tol:g})", rep)
        return initial_state(system, g, k)

    def _records(self, grid: Grid, system: System, states: Iterable[State],
                 c_bd: float) -> list[DiagnosticsRecord]:
        r = self.cfg.energy_r
        recs: list[DiagnosticsRecord] = []
        window: list[State] = []
        snaps = 0
        with CsvWriter(self.out / "diagnostics.csv", DiagnosticsRecord.columns()) as w:
            for n, st in enumerate(states):
                window = (window + [st])[-2:]
                rec = compute_record(grid, window if r else [st], system.bdata, c_bd, r)
                recs.append(rec)
                w.row(rec.values())
                if self.cfg.output.snapshots and n % self.cfg.output.snapshot_cadence == 0:
                    write_snapshot(self.out / f"snapshot_{snaps:05d}.bin", grid, st)
                    snaps += 1
        return recs

    def _energy_constant(self, recs: list[DiagnosticsRecord]) -> float:
        denom = recs[0].energy_total + recs[0].c_bd
        top = max(r.energy_k for r in recs)
        return top / denom if denom > 0 else (0.0 if top == 0 else math.inf)

    # -- modes ------------------------------------------------------------
    def evolve(self) -> None:
        grid = make_grid(self.cfg.grid)
        system = self._system(grid)
        st0 = self._initial(grid, system)
        c_bd = cbd_norm(grid, system.bdata, self.cfg.energy_r, self.cfg.evolve.t_final)
        t0 = time.perf_counter()
        recs = self._records(grid, system, evolve(system, st0, self.cfg.evolve), c_bd)
        self.info.update(wall_seconds=time.perf_counter() - t0, t_final=recs[-1].t,
                         outputs=len(recs), energy_constant=self._energy_constant(recs))

    def picard(self) -> None:
        grid = make_grid(self.cfg.grid)
        system = self._system(grid)
        st0 = self._initial(grid, system)
        c_bd = cbd_norm(grid, system.bdata, self.cfg.energy_r, self.cfg.evolve.t_final)
        res = picard_solve(system, st0, self.cfg.evolve, time_grid(system, st0, self.cfg.evolve))
        cad = self.cfg.evolve.diagnostics_cadence
        picked = [s for i, s in enumerate(res.states) if i % cad == 0 or i == len(res.states) - 1]
        self._records(grid, system, picked, c_bd)
        with CsvWriter(self.out / "picard.csv", ["iterate", "difference"]) as w:
            for i, d in enumerate(res.diffs, 1):
                w.row([str(i), d])
        self.info.update(picard_iterations=res.iterations, picard_converged=res.converged,
                         picard_diffs=res.diffs)
        if not res.converged:
            raise PicardError(f"Picard iteration did not reach {self.cfg.evolve.picard_tol:g} "
                              f"in {res.iterations} iterates")

    def _mms_run(self, grid: Grid, write: bool) -> dict:
        exact = ManufacturedSolution(self.cfg.mms_amp, grid.spec.period, grid.spec.x3_min)
        bdata = BoundaryData(grid, override=lambda face, t: exact.face_targets(grid, face, t))
        system = System(grid, bdata, self.cfg.elliptic, MMSSources(grid, exact))
        g, k, v, _ = exact.state_arrays(grid, 0.0)
        for a in (g, k, v):
            a[..., :grid.ghost] = np.nan
            a[..., -grid.ghost:] = np.nan
        st = initial_state(system, g, k, v)
        nd = grid.nodes
        writer = CsvWriter(self.out / "mms_errors.csv", ["t", "err_g", "err_k", "err_phi"]) \
            if write else None
        try:
            for st in evolve(system, st, self.cfg.evolve):
                ge, ke, _, pe = exact.state_arrays(grid, st.t)
                now = {"g": float(np.max(np.abs(st.g.full() - ge)[..., nd])),
                       "k": float(np.max(np.abs(st.k.full() - ke)[..., nd])),
                       "phi": float(np.max(np.abs(st.phi - pe)[..., nd]))}
                if writer:
                    writer.row([st.t, now["g"], now["k"], now["phi"]])
        finally:
            if writer:
                writer.close()
        return now

    def mms(self) -> None:
        grid = make_grid(self.cfg.grid)
        t0 = time.perf_counter()
        self.info["errors"] = self._mms_run(grid, True)
        self.info["wall_seconds"] = time.perf_counter() - t0

    def _levels(self) -> list[GridSpec]:
        s = self.cfg.grid
        return [GridSpec(s.n1 * 2 ** l, s.n2 * 2 ** l, (s.n3 - 1) * 2 ** l + 1, s.x3_min,
                         s.ghost, s.period) for l in range(self.cfg.levels)]

    def _write_rates(self, series: dict[str, list[float]], specs: list[GridSpec]) -> dict:
        summary = {}
        with CsvWriter(self.out / "rates.csv",
                       ["quantity", "level", "n1", "n2", "n3", "error", "rate", "monotone"]) as w:
            for q, errs in series.items():
                est = convergence_rate(errs)
                summary[q] = {"errors": errs, "rates": est.rates, "monotone": est.monotone}
                for lvl, (sp, e) in enumerate(zip(specs, errs)):
                    rate = est.rates[lvl - 1] if lvl else float("nan")
                    w.row([q, str(lvl), str(sp.n1), str(sp.n2), str(sp.n3), e, rate,
                           "true" if est.monotone else "false"])
        return summary

    def convergence_suite(self) -> None:
        specs = self._levels()
        series: dict[str, list[float]] = {"g": [], "k": [], "phi": []}
        t0 = time.perf_counter()
        for sp in specs:
            errs = self._mms_run(make_grid(sp), False)
            log.info("level %s: %s", sp, errs)
            for q in series:
                series[q].append(errs[q])
        self.info["rates"] = self._write_rates(series, specs)
        self.info["wall_seconds"] = time.perf_counter() - t0

    def trace_check(self) -> None:
        specs = self._levels()
        series: dict[str, list[float]] = {}
        for s in range(self.cfg.seed, self.cfg.seed + self.cfg.trace_states):
            key = f"trace_seed{s}"
            series[key] = []
            for sp in specs:
                grid = make_grid(sp)
                g, k, v = analytic_state(grid, s)
                series[key].append(trace_identity(grid, g, k, v, elliptic=self.cfg.elliptic).residual)
        self.info["rates"] = self._write_rates(series, specs)

    def compat_check(self) -> None:
        grid = make_grid(self.cfg.grid)
        system = self._system(grid)
        try:
            self._initial(grid, system)
        finally:
            with open(self.out / "compat_report.json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(self.info.get("compatibility", {}), fh, indent=2, sort_keys=True)
                fh.write("\n")

    def execute(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        mode = self.cfg.evolve.mode
        {"evolve": self.evolve, "picard": self.picard, "mms": self.mms,
         "trace-check": self.trace_check, "compat-check": self.compat_check,
         "convergence-suite": self.convergence_suite}[mode]()
        if self.cfg.output.figures:
            self.render_figures()

    def render_figures(self) -> None:
        from .figures import plot_diagnostics, plot_rates
        made = []
        if (self.out / "diagnostics.csv").exists():
            made.append(plot_diagnostics(self.out / "diagnostics.csv"))
        if (self.out / "rates.csv").exists():
            made.append(plot_rates(self.out / "rates.csv"))
        self.info["figures"] = [str(p) for p in made]


def classify(exc: BaseException) -> int:
    """Exit status for a failure class."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, CompatibilityError):
        return EXIT_COMPAT
    if isinstance(exc, (LapseError, BoundaryError, PicardError)):
        return EXIT_SOLVER
    if isinstance(exc, (EvolutionError, GhostError, FloatingPointError, ArithmeticError)):
        return EXIT_NUMERIC
    raise exc


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute ``cfg``; returns (exit status, results) and always writes the manifest."""
    runner = Run(cfg)
    status = EXIT_OK
    try:
        runner.execute()
    except Exception as exc:          # noqa: BLE001  (mapped to an exit code or re-raised)
        status = classify(exc)
        runner.info["error"] = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, CompatibilityError):
            runner.info["compatibility"] = exc.report
        log.error("%s", runner.info["error"])
    runner.out.mkdir(parents=True, exist_ok=True)
    write_manifest(runner.out, cfg, status, runner.info)
    return status, runner.info


def main(argv: list[str] | None = None) -> int:
    try:
        cfg, ns = parse_config(argv)
    except ConfigError as exc:
        print(f"maxslice: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    status, info = run(cfg)
    if status:
        print(f"maxslice: {info.get('error', 'failed')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
