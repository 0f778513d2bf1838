"""Truncated linearized operators in mass-weighted coordinates."""

from .assembly import (
    OperatorKind,
    OperatorMatrix,
    apply,
    assemble_full,
    assemble_integrated,
    assemble_tilde,
    difference_operator,
    integrated_apply,
    matvec,
    to_dense,
)
from .state import (
    Coords,
    StateVector,
    eta_threshold,
    from_V,
    mass_functional,
    norm,
    project_zero_mass,
    to_h,
    to_v,
    to_V,
    weak_form_apply,
    zero_mode,
)

__all__ = [
    "Coords",
    "OperatorKind",
    "OperatorMatrix",
    "StateVector",
    "apply",
    "assemble_full",
    "assemble_integrated",
    "assemble_tilde",
    "difference_operator",
    "eta_threshold",
    "from_V",
    "integrated_apply",
    "mass_functional",
    "matvec",
    "norm",
    "project_zero_mass",
    "to_V",
    "to_dense",
    "to_h",
    "to_v",
    "weak_form_apply",
    "zero_mode",
]
