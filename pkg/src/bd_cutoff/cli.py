"""Command-line harness: equilibrium, evolve, spectrum, pulse, cutoff, check-assumptions."""

import argparse
import json
import logging
import math
import sys
import time
from typing import Any, Callable, Optional

import numpy as np

from .coefficients import check_assumptions
from .config import Command, RunConfig, load_config_file, parse_config, parse_norm
from .cutoff import run_cutoff_experiment, run_pulse_experiment, uniform_pulse, upper_decay_check
from .dynamics import evolve, tail_mass
from .equilibrium import EquilibriumState, compute_Q, mu_s_estimate, second_moment, solve_z
from .errors import BeckerDoringError
from .exporter import ReportExporter, config_hash
from .models import ExperimentReport, Table
from .operators import assemble_full, assemble_tilde
from .spectral import kernel_certificate, measure_window_constants, spectrum_scan

logger = logging.getLogger(__name__)

DEFAULT_EVOLVE_T = 10.0
DETAILED_BALANCE_TOL = 1e-14
HEADROOM_TOL = 1e-10
MU_S_ESTIMATE_N = 100_000


def resolve_equilibrium(config: RunConfig) -> EquilibriumState:
    block = config.equilibrium
    if block.mu is not None:
        return solve_z(config.model, block.mu, tol=block.tol)
    return compute_Q(config.model, block.z, config.experiment.N)


def cmd_equilibrium(config: RunConfig, eq: EquilibriumState) -> ExperimentReport:
    eq = eq.extend(config.experiment.N)
    N = config.experiment.N
    report = ExperimentReport(command=Command.EQUILIBRIUM.value)
    residual = eq.detailed_balance_residual()
    estimate = mu_s_estimate(config.model, MU_S_ESTIMATE_N)
    report.summary = {
        "z": eq.z,
        "mu": eq.mass,
        "tail_bound": eq.tail_bound,
        "ratio": eq.ratio,
        "N": eq.N,
        "second_moment": second_moment(eq),
        "detailed_balance_residual": residual,
        "mu_s_lower_bound": estimate.value,
        "mu_s_saturated": estimate.saturated,
    }
    i = np.arange(1, N + 1)
    report.tables.append(
        Table(
            name="equilibrium",
            columns=["i", "Q", "log_Q"],
            rows=[[float(k), float(q), float(lq)] for k, q, lq in zip(i, eq.Q, eq.log_Q)],
        )
    )
    report.flag("detailed_balance", residual <= DETAILED_BALANCE_TOL)
    report.flag("tail_certified", eq.tail_bound <= config.equilibrium.tol)
    return report


def cmd_check_assumptions(config: RunConfig, eq: Optional[EquilibriumState]) -> ExperimentReport:
    result = check_assumptions(config.model, config.experiment.N)
    report = ExperimentReport(command=Command.CHECK_ASSUMPTIONS.value)
    report.summary = result.model_dump(exclude={"flags"})
    report.flags = dict(result.flags)
    return report


def cmd_evolve(config: RunConfig, eq: EquilibriumState) -> ExperimentReport:
    ex, nu = config.experiment, config.numerics
    N = config.truncation
    T = DEFAULT_EVOLVE_T if ex.T is None else ex.T
    assemble = assemble_full if ex.operator == "full" else assemble_tilde
    op = assemble(config.model, eq, N)
    v0 = uniform_pulse(eq, ex.N1, ex.pulse_end, N)
    norms = [parse_norm(name, ex.eta) for name in ex.norms]
    times = np.linspace(0.0, T, ex.n_samples + 1)
    traj = evolve(op, v0, T, nu.rtol, times, scheme=nu.scheme, dt=nu.dt, norms=norms)

    keys = list(traj.diagnostics)
    rows = [
        [float(t)] + [float(traj.diagnostics[key][k]) for key in keys]
        for k, t in enumerate(traj.times)
    ]
    report = ExperimentReport(command=Command.EVOLVE.value)
    report.tables.append(Table(name="evolve", columns=["t"] + keys, rows=rows))
    if config.output.snapshots:
        final = np.real(traj.final)
        report.tables.append(
            Table(
                name="snapshot",
                columns=["i", "v"],
                rows=[[float(k + 1), float(x)] for k, x in enumerate(final)],
            )
        )
    mass = traj.diagnostics["mass"]
    drift = float(np.abs(mass - mass[0]).max())
    headroom = max(tail_mass(row, N - N // 4) for row in traj.values)
    report.summary = {
        "z": eq.z,
        "N": N,
        "T": float(traj.times[-1]),
        "operator": ex.operator,
        "scheme": nu.scheme,
        "mass_drift": drift,
        "tail_mass": headroom,
        "steps": traj.stats.as_dict(),
    }
    if ex.operator == "full":
        report.flag("mass_conserved", drift <= 10 * nu.rtol * float(np.sum(np.abs(v0.values))))
    report.flag("headroom", headroom <= HEADROOM_TOL)
    return report


def cmd_spectrum(config: RunConfig, eq: EquilibriumState) -> ExperimentReport:
    ex = config.experiment
    table = spectrum_scan(
        config.model,
        eq,
        ex.lambda_grid,
        ex.N1_schedule,
        k=ex.k,
        mass_correct=ex.mass_correct,
        threads=config.threads,
    )
    kernel = kernel_certificate(config.model, eq, 4 * max(ex.N1_schedule), ex.k)
    constants = measure_window_constants(ex.N1_schedule, ex.k)

    decreasing, quartered = True, True
    lam_col, res_col = table.column("lambda"), table.column("residual")
    for lam in ex.lambda_grid:
        series = [r for l_, r in zip(lam_col, res_col) if l_ == float(lam)]
        decreasing &= all(b < a for a, b in zip(series, series[1:]))
        quartered &= series[-1] <= series[0] / 4

    report = ExperimentReport(command=Command.SPECTRUM.value, tables=[table])
    report.summary = {
        "z": eq.z,
        "cells": len(table.rows),
        "kernel_residual": kernel.residual,
        "window_c1": constants.c1,
        "window_c2": constants.c2,
        "window_ratio_min": constants.ratio_min,
        "window_ratio_max": constants.ratio_max,
    }
    report.flag("kernel_exact", kernel.residual <= 1e-12)
    report.flag(
        "window_constants",
        constants.c1 < constants.ratio_min <= constants.ratio_max <= constants.c2,
    )
    if len(ex.N1_schedule) > 1:
        report.flag("residual_decreasing", decreasing)
        report.flag("residual_quartered", quartered)
    return report


def cmd_pulse(config: RunConfig, eq: EquilibriumState) -> ExperimentReport:
    ex, nu = config.experiment, config.numerics
    return run_pulse_experiment(
        config.model,
        None,
        ex.N1,
        ex.pulse_end,
        T=ex.T,
        eps=ex.eps,
        K_star=ex.K_star,
        eq=eq,
        N=config.truncation,
        rtol=nu.rtol,
        scheme=nu.scheme,
        n_samples=ex.n_samples,
    )


def cmd_cutoff(config: RunConfig, eq: EquilibriumState) -> ExperimentReport:
    ex, nu = config.experiment, config.numerics
    factor = config.truncation // max(ex.N_list)
    cutoff = run_cutoff_experiment(
        config.model,
        None,
        ex.N_list,
        eps=ex.eps,
        eq=eq,
        K_star=ex.K_star,
        truncation_factor=factor,
        rtol=nu.rtol,
        scheme=nu.scheme,
        n_samples=ex.n_samples,
        threads=config.threads,
    )
    report = ExperimentReport(command=Command.CUTOFF.value, tables=list(cutoff.tables))
    report.summary = cutoff.model_dump(exclude={"tables", "flags"})
    report.flags = dict(cutoff.flags)
    if ex.upper_decay:
        upper = upper_decay_check(
            config.model,
            None,
            ex.N_list,
            eta=ex.eta,
            eps=ex.eps,
            eq=eq,
            truncation_factor=factor,
            rtol=nu.rtol,
            scheme=nu.scheme,
            n_samples=ex.n_samples,
            threads=config.threads,
        )
        report.summary["upper_decay"] = upper.model_dump(exclude={"flags"})
        for name, ok in upper.flags.items():
            report.flag(f"upper_{name}", ok)
    return report


HANDLERS: dict[Command, Callable[[RunConfig, Any], ExperimentReport]] = {
    Command.EQUILIBRIUM: cmd_equilibrium,
    Command.EVOLVE: cmd_evolve,
    Command.SPECTRUM: cmd_spectrum,
    Command.PULSE: cmd_pulse,
    Command.CUTOFF: cmd_cutoff,
    Command.CHECK_ASSUMPTIONS: cmd_check_assumptions,
}


def run(config: RunConfig, write: bool = True) -> ExperimentReport:
    """
    Execute one configured run and write its outputs.

    Returns:
        The report; report.passed is the exit-code contract

    Raises:
        BeckerDoringError: any failure in the numerical modules (nothing is left on disk)
    """
    start = time.perf_counter()
    eq = None
    if config.command != Command.CHECK_ASSUMPTIONS:
        eq = resolve_equilibrium(config)
    solved = time.perf_counter()
    logger.info("running %s", config.command.value)
    report = HANDLERS[config.command](config, eq)
    finished = time.perf_counter()

    report.command = config.command.value
    report.config = config.model_dump(mode="json")
    report.config_hash = config_hash(config.normalized())
    report.summary["seed"] = config.seed
    report.timings = {
        "equilibrium": solved - start,
        "experiment": finished - solved,
    }
    for name, ok in report.flags.items():
        if not ok:
            logger.warning("flag %s failed", name)
    if write:
        ReportExporter(config.output.directory).export(report, write_csv=config.output.csv)
    report.timings["total"] = time.perf_counter() - start
    return report


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _const_true() -> dict:
    return {"action": "store_const", "const": True, "default": None}


# (dest, block, field); block None means top level
FLAG_FIELDS = [
    ("kind", "model", "kind"),
    ("alpha", "model", "alpha"),
    ("beta", "model", "beta"),
    ("q", "model", "q"),
    ("z_s", "model", "z_s"),
    ("mu", "equilibrium", "mu"),
    ("z", "equilibrium", "z"),
    ("tol", "equilibrium", "tol"),
    ("N", "experiment", "N"),
    ("T", "experiment", "T"),
    ("n_samples", "experiment", "n_samples"),
    ("eps", "experiment", "eps"),
    ("N1", "experiment", "N1"),
    ("N2", "experiment", "N2"),
    ("K_star", "experiment", "K_star"),
    ("N_list", "experiment", "N_list"),
    ("eta", "experiment", "eta"),
    ("lambda_grid", "experiment", "lambda_grid"),
    ("N1_schedule", "experiment", "N1_schedule"),
    ("k", "experiment", "k"),
    ("mass_correct", "experiment", "mass_correct"),
    ("operator", "experiment", "operator"),
    ("norms", "experiment", "norms"),
    ("N_trunc", "numerics", "N_trunc"),
    ("rtol", "numerics", "rtol"),
    ("scheme", "numerics", "scheme"),
    ("dt", "numerics", "dt"),
    ("out", "output", "directory"),
    ("snapshots", "output", "snapshots"),
    ("threads", None, "threads"),
    ("seed", None, "seed"),
]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--out", "--output", dest="out", help="Output directory")
    common.add_argument("--threads", type=int, help="Worker threads for independent cells")
    common.add_argument("--seed", type=int, help="Recorded only")
    common.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING, ERROR")
    common.add_argument("--model-config", help="JSON file holding only the model block")
    common.add_argument("--kind", choices=["penrose", "constant", "custom-table"])
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--q", type=float)
    common.add_argument("--z-s", dest="z_s", type=float)
    common.add_argument("--mu", type=float, help="Equilibrium mass")
    common.add_argument("--z", type=float, help="Monomer density (instead of --mu)")
    common.add_argument("--tol", type=float)
    common.add_argument("--N-trunc", dest="N_trunc", type=int)
    common.add_argument("--rtol", type=float)
    common.add_argument("--scheme", choices=["explicit", "implicit"])

    parser = argparse.ArgumentParser(
        prog="bd-cutoff",
        description="Linearized Becker-Doring dynamics: quasimodes, transport and cutoff",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", parents=[common], help="Solve for z and Q")
    p.add_argument("--N", type=int)

    p = sub.add_parser("check-assumptions", parents=[common], help="Coefficient assumptions")
    p.add_argument("--N", type=int)

    p = sub.add_parser("evolve", parents=[common], help="Evolve a pulse under L or tilde-L")
    p.add_argument("--N", dest="N_trunc", type=int, help="Truncation (same as --N-trunc)")
    p.add_argument("--N1", type=int)
    p.add_argument("--N2", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--dt", type=float, help="Implicit step size")
    p.add_argument("--operator", choices=["full", "tilde"])
    p.add_argument("--norms", type=lambda s: [x for x in s.split(",") if x])
    p.add_argument("--eta", type=float)
    p.add_argument("--snapshots", **_const_true())

    p = sub.add_parser("spectrum", parents=[common], help="Quasimode residual scan")
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    p.add_argument("--N1-schedule", dest="N1_schedule", type=_int_list)
    p.add_argument("--k", type=float)
    p.add_argument("--mass-correct", dest="mass_correct", **_const_true())

    p = sub.add_parser("pulse", parents=[common], help="Transport window experiment")
    p.add_argument("--N1", type=int)
    p.add_argument("--N2", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--Kstar", dest="K_star", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)

    p = sub.add_parser("cutoff", parents=[common], help="Two-pulse half-life scaling")
    p.add_argument("--N-list", dest="N_list", type=_int_list)
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--Kstar", dest="K_star", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    """Nested override dict holding only the flags that were given."""
    overrides: dict[str, Any] = {"command": args.command}
    if getattr(args, "model_config", None):
        overrides["model"] = load_config_file(args.model_config)
    for dest, block, name in FLAG_FIELDS:
        value = getattr(args, dest, None)
        if value is None:
            continue
        if block is None:
            overrides[name] = value
        else:
            overrides.setdefault(block, {})[name] = value
    return overrides


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}" if math.isfinite(value) else str(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, default=str)[:80]
    return str(value)


def print_summary(report: ExperimentReport) -> None:
    print(f"\n{'=' * 60}")
    print(f"{report.command}: {'PASSED' if report.passed else 'FAILED'}")
    print(f"config hash: {report.config_hash}")
    print(f"{'=' * 60}")
    for key, value in report.summary.items():
        print(f"  {key}: {_format(value)}")
    for name, ok in report.flags.items():
        print(f"  {'✓' if ok else '✗'} {name}")
    for name, path in report.table_paths.items():
        print(f"✓ {name} -> {path}")


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point; exit code 0 iff every acceptance flag passed."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = parse_config(args.config, overrides_from_args(args))
        report = run(config)
    except BeckerDoringError as e:
        logger.error("%s", e)
        print(f"Error: {e}", file=sys.stderr)
        return 2
    print_summary(report)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
