"""Characteristics, supersolutions and the cutoff experiments."""

from .characteristics import (
    Characteristic,
    Supersolution,
    Which,
    calibrate_D,
    characteristic_A,
    chi_window,
    comparison_check,
    comparison_constant,
    disjointness_horizon,
    duhamel_bound,
    estimate_N_star,
    extinction_time,
    left_mass_edge,
    minimum_principle_check,
    supersolution_check,
    supersolution_time_derivative,
    supersolution_values,
    two_pulse_windows,
    window_mass,
)
from .experiments import (
    KStarScan,
    corollary_data,
    first_crossing,
    run_cutoff_experiment,
    run_pulse_experiment,
    scan_K_star,
    uniform_pulse,
    upper_decay_check,
)

__all__ = [
    "Characteristic",
    "KStarScan",
    "Supersolution",
    "Which",
    "calibrate_D",
    "characteristic_A",
    "chi_window",
    "comparison_check",
    "comparison_constant",
    "corollary_data",
    "disjointness_horizon",
    "duhamel_bound",
    "estimate_N_star",
    "extinction_time",
    "first_crossing",
    "left_mass_edge",
    "minimum_principle_check",
    "run_cutoff_experiment",
    "run_pulse_experiment",
    "scan_K_star",
    "supersolution_check",
    "supersolution_time_derivative",
    "supersolution_values",
    "two_pulse_windows",
    "uniform_pulse",
    "upper_decay_check",
    "window_mass",
]
