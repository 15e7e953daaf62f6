"""Spectral-density fitting with lossy interacting modes and Lindblad
emitter dynamics in the ultrastrong-coupling regime."""

from .dynamics import QuantumState, Trajectory, lindblad_rhs, propagate, \
    steady_state
from .fit import FitConfig, FitResult, fit_model, fit_report, initialize_model
from .fock import BasisSpec, EmitterSpec, build_basis, build_hamiltonian, \
    build_jump_operators
from .metrics import ErrorReport, relative_error, threshold_sweep
from .oracle import DiscretizationSpec, discretize, exact_propagate
from .spectral import LorentzianParams, ModeModel, SingleModeOhmicParams, \
    TabulatedSD, eval_lorentzian, eval_model_sd, eval_single_mode_ohmic, \
    eval_tabulated, model_resonances

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "DiscretizationSpec", "EmitterSpec", "ErrorReport",
    "FitConfig", "FitResult", "LorentzianParams", "ModeModel", "QuantumState",
    "SingleModeOhmicParams", "TabulatedSD", "Trajectory", "build_basis",
    "build_hamiltonian", "build_jump_operators", "discretize",
    "eval_lorentzian", "eval_model_sd", "eval_single_mode_ohmic",
    "eval_tabulated", "exact_propagate", "fit_model", "fit_report",
    "initialize_model", "lindblad_rhs", "model_resonances", "propagate",
    "relative_error", "steady_state", "threshold_sweep",
]
