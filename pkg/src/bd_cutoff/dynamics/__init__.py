"""Time evolution: linear semigroups and the nonlinear system."""

from .linear import (
    CrankNicolsonSolver,
    DuhamelComparison,
    duhamel_gap,
    evolve,
    evolve_linear,
    evolve_linear_implicit,
    stability_cap,
    tail_mass,
)
from .nonlinear import BeckerDoringSystem, evolve_nonlinear, linearization_check
from .stepper import AdaptiveStepper, StepStats, Trajectory, hermite

__all__ = [
    "AdaptiveStepper",
    "BeckerDoringSystem",
    "CrankNicolsonSolver",
    "DuhamelComparison",
    "StepStats",
    "Trajectory",
    "duhamel_gap",
    "evolve",
    "evolve_linear",
    "evolve_linear_implicit",
    "evolve_nonlinear",
    "hermite",
    "linearization_check",
    "stability_cap",
    "tail_mass",
]
