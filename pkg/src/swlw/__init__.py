"""Short wave-long wave interaction in planar MHD: spectral Galerkin solver,
limit-system reference solvers, invariant monitors and vanishing-viscosity sweeps."""

from .config import RunConfig, load_config, parse_config
from .constitutive import CouplingFns, GasParams
from .entropy_pairs import EntropyPairSpec, entropy_pair, pair_bounds_check
from .errors import (
    DivergenceError,
    IOFailure,
    NumericalError,
    PositivityError,
    SwlwError,
    VacuumError,
    ValidationError,
)
from .euler_limit import EulerState, NlsState, run_euler, run_limit, run_nls
from .galerkin import GalerkinState, SolverConfig, reconstruct, run, to_eulerian
from .invariants import MONITOR_COLUMNS, MonitorRecord, measure
from .lagrangian import build_map, pullback, pushforward
from .sweep import SWEEP_COLUMNS, fit_rate, make_plan, run_sweep

__version__ = "0.1.0"

__all__ = [
    "CouplingFns", "GasParams",
    "SolverConfig", "GalerkinState", "run", "reconstruct", "to_eulerian",
    "MonitorRecord", "MONITOR_COLUMNS", "measure",
    "build_map", "pullback", "pushforward",
    "EntropyPairSpec", "entropy_pair", "pair_bounds_check",
    "EulerState", "NlsState", "run_euler", "run_nls", "run_limit",
    "make_plan", "run_sweep", "fit_rate", "SWEEP_COLUMNS",
    "RunConfig", "load_config", "parse_config",
    "DivergenceError", "IOFailure", "NumericalError", "PositivityError", "SwlwError", "VacuumError",
    "ValidationError",
]
