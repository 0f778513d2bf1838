"""Becker-Doring cutoff - numerical laboratory for the linearized Becker-Doring equations."""

__version__ = "0.1.0"

from .coefficients import check_assumptions, make_constant, make_custom, make_penrose, rate, rates
from .config import RunConfig, parse_config
from .cutoff import (
    Characteristic,
    Supersolution,
    calibrate_D,
    chi_window,
    comparison_check,
    minimum_principle_check,
    run_cutoff_experiment,
    run_pulse_experiment,
    supersolution_check,
    upper_decay_check,
    window_mass,
)
from .dynamics import (
    evolve,
    evolve_linear,
    evolve_linear_implicit,
    evolve_nonlinear,
    linearization_check,
)
from .equilibrium import EquilibriumState, compute_Q, mass_at, mu_s_estimate, solve_z
from .errors import BeckerDoringError
from .exporter import ReportExporter
from .models import (
    AssumptionReport,
    Certificate,
    CoefficientModel,
    CutoffReport,
    ExperimentReport,
    ModelKind,
    NormSpec,
    Table,
)
from .operators import (
    OperatorKind,
    OperatorMatrix,
    StateVector,
    apply,
    assemble_full,
    assemble_integrated,
    assemble_tilde,
    norm,
)
from .spectral import build_quasimode, residual_ratio, resolvent_certificate, spectrum_scan

__all__ = [
    # Coefficients
    "check_assumptions",
    "make_constant",
    "make_custom",
    "make_penrose",
    "rate",
    "rates",
    # Equilibrium
    "EquilibriumState",
    "compute_Q",
    "mass_at",
    "mu_s_estimate",
    "solve_z",
    # Operators
    "OperatorKind",
    "OperatorMatrix",
    "StateVector",
    "apply",
    "assemble_full",
    "assemble_integrated",
    "assemble_tilde",
    "norm",
    # Dynamics
    "evolve",
    "evolve_linear",
    "evolve_linear_implicit",
    "evolve_nonlinear",
    "linearization_check",
    # Spectral
    "build_quasimode",
    "residual_ratio",
    "resolvent_certificate",
    "spectrum_scan",
    # Cutoff
    "Characteristic",
    "Supersolution",
    "calibrate_D",
    "chi_window",
    "comparison_check",
    "minimum_principle_check",
    "run_cutoff_experiment",
    "run_pulse_experiment",
    "supersolution_check",
    "upper_decay_check",
    "window_mass",
    # Harness
    "ReportExporter",
    "RunConfig",
    "parse_config",
    # Models
    "AssumptionReport",
    "BeckerDoringError",
    "Certificate",
    "CoefficientModel",
    "CutoffReport",
    "ExperimentReport",
    "ModelKind",
    "NormSpec",
    "Table",
]
