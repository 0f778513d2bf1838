"""Pulse-transport and two-pulse cutoff experiments."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..dynamics import duhamel_gap, evolve, tail_mass
from ..equilibrium import EquilibriumState, solve_z
from ..errors import ExperimentInvalidError, ParameterError
from ..models import (
    CoefficientModel,
    CutoffReport,
    ExperimentReport,
    NormSpec,
    Table,
    UpperDecayReport,
)
from ..operators import (
    Coords,
    StateVector,
    assemble_full,
    assemble_tilde,
    mass_functional,
    norm,
)
from .characteristics import (
    Characteristic,
    Supersolution,
    Which,
    calibrate_D,
    chi_window,
    disjointness_horizon,
    duhamel_bound,
    estimate_N_star,
    left_mass_edge,
    supersolution_values,
    window_mass,
)

logger = logging.getLogger(__name__)

DEFAULT_EPS = 0.1
HALF_LIFE_LEVEL = 0.5
HEADROOM_TOL = 1e-10
COMPARISON_TOL = 1e-8
K_STAR_MULTIPLIERS = (2.0, 4.0, 8.0)
PULSE_COLUMNS = [
    "t",
    "X1_norm",
    "window_mass",
    "window_lo",
    "window_hi",
    "duhamel_gap",
    "duhamel_bound",
    "left_edge",
]
CUTOFF_SUMMARY_COLUMNS = ["N", "T_half", "t_eps", "delta_hat", "disjoint_horizon", "censored"]


def _resolve_equilibrium(
    model: CoefficientModel, mu: Optional[float], eq: Optional[EquilibriumState]
) -> EquilibriumState:
    if eq is not None:
        return eq
    if mu is None:
        raise ParameterError("either mu or an equilibrium is required")
    return solve_z(model, mu)


def uniform_pulse(eq: EquilibriumState, N1: int, N2: int, N: int) -> StateVector:
    """Unit-mass v-form pulse, uniform on the open interval (N1, N2)."""
    if N2 - N1 < 2:
        raise ParameterError(f"open interval ({N1}, {N2}) contains no index")
    if N2 > N:
        raise ParameterError(f"pulse end {N2} exceeds truncation {N}")
    v = np.zeros(N)
    v[N1 : N2 - 1] = 1.0 / (N2 - N1 - 1)
    return StateVector(Coords.V, v, eq)


def corollary_data(eq: EquilibriumState, N: int, truncation: int) -> StateVector:
    """u1 - u2 with weight 2/N on [N/4, N/2) and on [3N/4, N)."""
    if N % 4:
        raise ParameterError(f"N must be divisible by 4, got {N}")
    if truncation < N:
        raise ParameterError(f"truncation {truncation} below N={N}")
    u = np.zeros(truncation)
    u[N // 4 - 1 : N // 2 - 1] = 2.0 / N
    u[3 * N // 4 - 1 : N - 1] = -2.0 / N
    return StateVector(Coords.V, u, eq)


def first_crossing(times: np.ndarray, series: np.ndarray, level: float) -> Optional[float]:
    """First time the series drops below level, linearly interpolated; None if never."""
    below = np.nonzero(series < level)[0]
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return float(times[0])
    t0, t1 = times[k - 1], times[k]
    s0, s1 = series[k - 1], series[k]
    return float(t0 + (s0 - level) * (t1 - t0) / (s0 - s1))


def first_failure(times: np.ndarray, series: np.ndarray, level: float) -> Optional[float]:
    """First sampled time with series <= level (no interpolation)."""
    fail = np.nonzero(series <= level)[0]
    return float(times[int(fail[0])]) if fail.size else None


@dataclass
class PulseWindows:
    """Window masses of a pulse flow for one K*."""

    K_star: float
    masses: np.ndarray
    edges: np.ndarray
    delta_hat: float
    censored: bool


def _windows(
    c: Characteristic,
    eq: EquilibriumState,
    times: np.ndarray,
    values: np.ndarray,
    N1: int,
    N2: int,
    K_star: float,
    eps: float,
    scale: float,
) -> PulseWindows:
    edges = np.array([chi_window(c, N1, N2, t, K_star) for t in times])
    masses = np.array(
        [window_mass(StateVector(Coords.V, row, eq), tuple(e)) for row, e in zip(values, edges)]
    )
    t_fail = first_failure(times, masses, 1.0 - eps)
    censored = t_fail is None
    delta = (times[-1] if censored else t_fail) / scale
    return PulseWindows(K_star, masses, edges, delta, censored)


@dataclass
class KStarScan:
    """Window checks for each candidate K*."""

    D: float
    horizon: float
    candidates: list[PulseWindows] = field(default_factory=list)
    chosen: Optional[float] = None


def scan_K_star(
    c: Characteristic,
    eq: EquilibriumState,
    times: np.ndarray,
    values: np.ndarray,
    N1: int,
    N2: int,
    D: float,
    eps: float = DEFAULT_EPS,
    horizon: Optional[float] = None,
    multipliers: Sequence[float] = K_STAR_MULTIPLIERS,
) -> KStarScan:
    """
    Smallest K* in {2D, 4D, 8D} whose window holds mass > 1 - eps up to the horizon.

    The horizon defaults to half the extinction time of A(N1, 2t).
    """
    scale = N1 ** (1.0 - c.alpha)
    if horizon is None:
        horizon = 0.25 * float(c.extinction_time(N1))
    scan = KStarScan(D=D, horizon=horizon)
    for m in multipliers:
        windows = _windows(c, eq, times, values, N1, N2, m * D, eps, scale)
        scan.candidates.append(windows)
        if scan.chosen is None and windows.delta_hat * scale >= min(horizon, times[-1]):
            scan.chosen = m * D
    return scan


def _comparison_excess(
    c: Characteristic,
    times: np.ndarray,
    values: np.ndarray,
    N1: int,
    N2: int,
    D: float,
    valid: np.ndarray,
) -> tuple[float, float]:
    N = values.shape[1]
    w1 = Supersolution(Which.W1, D, N1, c)
    w2 = Supersolution(Which.W2, D, N2, c)
    excess1 = excess2 = -math.inf
    for t, row, ok in zip(times, values, valid):
        if not ok:
            continue
        V = np.cumsum(row)
        excess1 = max(excess1, float((V - supersolution_values(w1, t, N)).max()))
        excess2 = max(excess2, float((1.0 - V - supersolution_values(w2, t, N)).max()))
    return excess1, excess2


def run_pulse_experiment(
    model: CoefficientModel,
    mu: Optional[float],
    N1: int,
    N2: int,
    T: Optional[float] = None,
    eps: float = DEFAULT_EPS,
    K_star: Optional[float] = None,
    eq: Optional[EquilibriumState] = None,
    N: Optional[int] = None,
    rtol: float = 1e-8,
    scheme: str = "explicit",
    n_samples: int = 200,
) -> ExperimentReport:
    """
    Track a unit pulse on (N1, N2) against the window following the characteristics.

    The full and comparison flows are evolved from the same data; the window
    mass, l1 Duhamel gap and left mass edge are recorded at every sample.

    Args:
        model: Coefficient model
        mu: Equilibrium mass (ignored when eq is given)
        N1, N2: Pulse support
        T: Final time (default: extinction time of A(N1, 2t))
        eps: Window mass threshold 1 - eps
        K_star: Window margin (default: smallest passing value of the {2D, 4D, 8D} scan)
        eq: Pre-solved equilibrium
        N: Truncation (default 4 N2)
        rtol: Integrator tolerance
        scheme: "explicit" or "implicit"
        n_samples: Number of sampling intervals on [0, T]

    Raises:
        ExperimentInvalidError: mass reaches the last quarter of the truncation
    """
    eq = _resolve_equilibrium(model, mu, eq)
    c = Characteristic.from_equilibrium(eq)
    N = 4 * N2 if N is None else N
    T = float(c.extinction_time(N1)) / 2.0 if T is None else T
    scale = N1 ** (1.0 - c.alpha)
    D = calibrate_D(model, eq)

    v0 = uniform_pulse(eq, N1, N2, N)
    times = np.linspace(0.0, T, n_samples + 1)
    full, tilde = assemble_full(model, eq, N), assemble_tilde(model, eq, N)
    logger.info("pulse experiment N1=%d N2=%d N=%d T=%.4g", N1, N2, N, T)
    comparison = duhamel_gap(full, tilde, v0, T, rtol, times, scheme=scheme)
    values = comparison.full.values

    headroom = max(tail_mass(row, N - N // 4) for row in values)
    if headroom > HEADROOM_TOL:
        raise ExperimentInvalidError(
            f"tail mass {headroom:.3g} beyond index {N - N // 4} exceeds {HEADROOM_TOL}; "
            "increase the truncation"
        )

    scan = scan_K_star(c, eq, times, values, N1, N2, D, eps)
    if K_star is None:
        K_star = scan.chosen if scan.chosen is not None else K_STAR_MULTIPLIERS[-1] * D
    windows = _windows(c, eq, times, values, N1, N2, K_star, eps, scale)

    n_star = estimate_N_star(model, eq, Supersolution(Which.W1, D, N1, c), N)
    valid = np.array([c.A(N1, 2.0 * t) >= n_star for t in times])
    excess1, excess2 = _comparison_excess(c, times, comparison.tilde.values, N1, N2, D, valid)

    rows = []
    for k, t in enumerate(times):
        edge = left_mass_edge(StateVector(Coords.V, comparison.tilde.values[k], eq), eps)
        rows.append(
            [
                float(t),
                float(np.sum(np.abs(values[k]))),
                float(windows.masses[k]),
                float(windows.edges[k][0]),
                float(windows.edges[k][1]),
                float(comparison.gap[k]),
                duhamel_bound(c, N1, float(t)),
                float(edge) if edge is not None else math.nan,
            ]
        )

    report = ExperimentReport(command="pulse")
    report.tables.append(Table(name="pulse", columns=PULSE_COLUMNS, rows=rows))
    report.summary = {
        "z": eq.z,
        "N": N,
        "N1": N1,
        "N2": N2,
        "T": T,
        "eps": eps,
        "D": D,
        "K_star": K_star,
        "N_star": n_star,
        "delta_hat": windows.delta_hat,
        "censored": windows.censored,
        "validity_horizon": windows.delta_hat * scale,
        "max_duhamel_gap": float(comparison.gap.max()),
        "final_duhamel_gap": float(comparison.gap[-1]),
        "max_excess_W1": excess1,
        "max_excess_W2": excess2,
        "K_star_scan": {
            f"{m:g}D": w.delta_hat for m, w in zip(K_STAR_MULTIPLIERS, scan.candidates)
        },
    }
    report.flag("initial_window_mass", abs(windows.masses[0] - 1.0) <= 1e-12)
    report.flag("delta_hat_positive", windows.delta_hat > 0)
    report.flag("K_star_found", scan.chosen is not None)
    report.flag("comparison_W1", excess1 <= COMPARISON_TOL)
    report.flag("comparison_W2", excess2 <= COMPARISON_TOL)
    if windows.censored:
        logger.warning("window mass stayed above %.3g up to T=%.4g (censored)", 1 - eps, T)
    return report


@dataclass
class CorollaryRun:
    """Norm series of one two-pulse run."""

    N: int
    times: np.ndarray
    norms: np.ndarray
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    initial_mass: float = 0.0


def _corollary_run(
    model: CoefficientModel,
    eq: EquilibriumState,
    N: int,
    truncation_factor: int,
    T: float,
    rtol: float,
    scheme: str,
    n_samples: int,
    stop_level: float,
    norms: Sequence[NormSpec] = (),
) -> CorollaryRun:
    truncation = truncation_factor * N
    u0 = corollary_data(eq, N, truncation)
    op = assemble_full(model, eq, truncation)
    times = np.linspace(0.0, T, n_samples + 1)

    def stop(t: float, y: np.ndarray) -> bool:
        return float(np.sum(np.abs(y))) < stop_level

    traj = evolve(op, u0, T, rtol, times, scheme=scheme, stop=stop, norms=norms)
    run = CorollaryRun(
        N=N,
        times=traj.times,
        norms=np.sum(np.abs(traj.values), axis=1),
        initial_mass=float(mass_functional(eq, u0)),
    )
    for key, series in traj.diagnostics.items():
        run.extra[key] = series
    logger.info("two-pulse run N=%d finished at t=%.4g", N, traj.times[-1])
    return run


def _map_cells(fn, items: Sequence, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_cutoff_experiment(
    model: CoefficientModel,
    mu: Optional[float],
    N_list: Sequence[int],
    eps: float = DEFAULT_EPS,
    eq: Optional[EquilibriumState] = None,
    K_star: Optional[float] = None,
    truncation_factor: int = 4,
    T_factor: float = 4.0,
    rtol: float = 1e-8,
    scheme: str = "explicit",
    n_samples: int = 400,
    threads: int = 1,
    exponent_tol: float = 0.15,
) -> CutoffReport:
    """
    Half-life scaling of the two-pulse data u1 - u2.

    Each N runs up to T_factor times the extinction time of A(N, t), or until
    the l1 norm drops below eps / 2. T_half(N) is the first time the norm
    falls below 1/2; log T_half is regressed on log N.
    """
    if not N_list:
        raise ParameterError("N_list must be nonempty")
    eq = _resolve_equilibrium(model, mu, eq)
    c = Characteristic.from_equilibrium(eq)
    D = calibrate_D(model, eq)
    K_star = 4.0 * D if K_star is None else K_star
    p = 1.0 - c.alpha

    def cell(N: int) -> CorollaryRun:
        T = T_factor * float(c.extinction_time(N))
        return _corollary_run(
            model, eq, N, truncation_factor, T, rtol, scheme, n_samples, 0.5 * eps
        )

    runs = _map_cells(cell, list(N_list), threads)

    T_half, t_eps, deltas, horizons, censored = [], [], [], [], []
    norm_rows = []
    for run in runs:
        th = first_crossing(run.times, run.norms, HALF_LIFE_LEVEL)
        te = first_crossing(run.times, run.norms, eps)
        t_fail = first_failure(run.times, run.norms, 1.0 - eps)
        T_half.append(th)
        t_eps.append(te)
        deltas.append((run.times[-1] if t_fail is None else t_fail) / run.N**p)
        horizons.append(disjointness_horizon(c, run.N, K_star))
        if th is None:
            censored.append(run.N)
            logger.warning("N=%d: norm stayed above 1/2 (censored)", run.N)
        norm_rows.extend([float(t), float(run.N), float(x)] for t, x in zip(run.times, run.norms))

    fitted = [(n, th) for n, th in zip(N_list, T_half) if th is not None and th > 0]
    exponent = prefactor = None
    if len(fitted) >= 2:
        slope, intercept = np.polyfit(
            np.log([n for n, _ in fitted]), np.log([th for _, th in fitted]), 1
        )
        exponent, prefactor = float(slope), float(math.exp(intercept))

    summary_rows = [
        [
            float(run.N),
            th if th is not None else math.nan,
            te if te is not None else math.nan,
            d,
            h,
            1.0 if th is None else 0.0,
        ]
        for run, th, te, d, h in zip(runs, T_half, t_eps, deltas, horizons)
    ]
    halves = [th for th in T_half if th is not None]
    report = CutoffReport(
        alpha=c.alpha,
        N_values=list(N_list),
        T_half=T_half,
        t_eps=t_eps,
        delta_hat=min(deltas),
        fitted_exponent=exponent,
        fitted_prefactor=prefactor,
        censored=censored,
        tables=[
            Table(name="cutoff_summary", columns=CUTOFF_SUMMARY_COLUMNS, rows=summary_rows),
            Table(name="cutoff_norms", columns=["t", "N", "X1_norm"], rows=norm_rows),
        ],
    )
    report.flags = {
        "initial_norm": all(abs(run.norms[0] - 1.0) <= 1e-12 for run in runs),
        "zero_mass": all(abs(run.initial_mass) <= 1e-14 for run in runs),
        "no_censored": not censored,
        "T_half_increasing": len(halves) == len(runs) and all(np.diff(halves) > 0),
        "exponent_within_tol": exponent is not None and abs(exponent - p) <= exponent_tol,
        "lower_bound_delta_positive": min(deltas) > 0,
    }
    return report


def upper_decay_check(
    model: CoefficientModel,
    mu: Optional[float],
    N: Union[int, Sequence[int]],
    eta: float = 0.02,
    eps: float = DEFAULT_EPS,
    eq: Optional[EquilibriumState] = None,
    truncation_factor: int = 4,
    T_factor: float = 8.0,
    rtol: float = 1e-8,
    scheme: str = "explicit",
    n_samples: int = 400,
    threads: int = 1,
    growth_limit: float = 2.5,
) -> UpperDecayReport:
    """
    Time to drop below eps and the late-time decay of the exponentially weighted norm.

    The decay rate is the negated slope of log Y_eta against t over the samples
    after t_eps.

    Raises:
        ParameterError: eta at or above log(z_s / z)
        SaturationError: Y_eta of the data overflows
    """
    eq = _resolve_equilibrium(model, mu, eq)
    c = Characteristic.from_equilibrium(eq)
    N_values = [N] if isinstance(N, int) else list(N)
    spec = NormSpec.y(eta)

    initial = []
    for n in N_values:
        u0 = corollary_data(eq, n, truncation_factor * n)
        initial.append(norm(spec, eq, u0))

    def cell(n: int) -> CorollaryRun:
        T = T_factor * float(c.extinction_time(n))
        return _corollary_run(
            model, eq, n, truncation_factor, T, rtol, scheme, n_samples, 1e-3 * eps, (spec,)
        )

    runs = _map_cells(cell, N_values, threads)
    t_eps, rates = [], []
    for run in runs:
        te = first_crossing(run.times, run.norms, eps)
        t_eps.append(te)
        rate = None
        if te is not None:
            late = (run.times >= te) & (run.extra["Yeta"] > 0)
            if late.sum() >= 3:
                slope = np.polyfit(run.times[late], np.log(run.extra["Yeta"][late]), 1)[0]
                rate = float(-slope)
        rates.append(rate)

    ratios = [
        t_eps[k + 1] / t_eps[k]
        for k in range(len(t_eps) - 1)
        if t_eps[k] is not None and t_eps[k + 1] is not None and t_eps[k] > 0
    ]
    report = UpperDecayReport(
        eta=eta,
        eps=eps,
        N_values=N_values,
        t_eps=t_eps,
        growth_ratios=ratios,
        t_eps_over_N=[te / n if te is not None else None for te, n in zip(t_eps, N_values)],
        decay_rates=rates,
        initial_Yeta=initial,
    )
    report.flags = {
        "t_eps_found": all(te is not None for te in t_eps),
        "growth_bounded": all(r <= growth_limit for r in ratios),
        "decay_rate_positive": all(r is not None and r > 0 for r in rates),
        "initial_Yeta_bound": all(
            y <= math.exp(n * eta) for y, n in zip(initial, N_values)
        ),
    }
    return report
