"""Maximal-slicing initial boundary value problem for the vacuum Einstein equations
on a collar T^2 x [x3_min, 0], as a reduced wave system for the second
fundamental form coupled to an elliptic lapse equation."""

__version__ = "0.1.0"

from .grid import Grid, GridSpec, SymTensorField, make_grid
from .lapse import EllipticConfig, LapseError, solve_lapse
from .boundary import (BoundaryData, BoundaryError, ConstantFamily, DiagExponentialFamily,
                       TabulatedFamily, apply_bc, bc_residuals, compatibility_check,
                       hatk_from_conformal)
from .evolution import (EvolutionError, EvolveConfig, PicardError, State, System, evolve,
                        initial_kdot, initial_state, picard_solve, rhs_wave, step)
from .diagnostics import (DiagnosticsRecord, compute_record, convergence_rate, energy_k,
                          energy_total, propagation_check, trace_identity_check)

__all__ = [
    "Grid", "GridSpec", "SymTensorField", "make_grid",
    "EllipticConfig", "LapseError", "solve_lapse",
    "BoundaryData", "BoundaryError", "ConstantFamily", "DiagExponentialFamily",
    "TabulatedFamily", "apply_bc", "bc_residuals", "compatibility_check", "hatk_from_conformal",
    "EvolutionError", "EvolveConfig", "PicardError", "State", "System", "evolve",
    "initial_kdot", "initial_state", "picard_solve", "rhs_wave", "step",
    "DiagnosticsRecord", "compute_record", "convergence_rate", "energy_k", "energy_total",
    "propagation_check", "trace_identity_check",
]
