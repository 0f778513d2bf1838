"""Characteristic curves, transport windows and the comparison supersolutions."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..dynamics import evolve_linear
from ..equilibrium import EquilibriumState
from ..errors import ParameterError
from ..models import (
    CoefficientModel,
    ComparisonReport,
    MinimumPrincipleReport,
    SupersolutionReport,
)
from ..operators import (
    Coords,
    StateVector,
    assemble_integrated,
    assemble_tilde,
    matvec,
    to_v,
)

logger = logging.getLogger(__name__)

# Time dilation of the lower and upper window edges.
LOWER_DILATION = 2.0
UPPER_DILATION = 0.5
SUPERSOLUTION_TOL = 1e-10


@dataclass(frozen=True)
class Characteristic:
    """Solutions of dA/dt = -(z_s - z) A^alpha with A(x, 0) = x."""

    alpha: float
    drift: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"characteristics need alpha in (0, 1), got {self.alpha}")
        if not self.drift > 0:
            raise ParameterError(f"drift z_s - z must be positive, got {self.drift}")

    @classmethod
    def from_equilibrium(cls, eq: EquilibriumState) -> "Characteristic":
        return cls(alpha=eq.model.alpha, drift=eq.drift)

    def A(self, x, t):
        """Closed-form characteristic, clamped to 1 after extinction."""
        p = 1.0 - self.alpha
        x = np.asarray(x, dtype=float)
        # x (1 - s)^(1/p) returns x exactly at t = 0
        s = self.drift * p * np.asarray(t, dtype=float) / np.power(x, p)
        with np.errstate(invalid="ignore"):
            value = np.where(s < 1.0, x * np.power(np.maximum(1.0 - s, 0.0), 1.0 / p), 1.0)
        value = np.maximum(value, 1.0)
        return float(value) if np.ndim(value) == 0 else value

    def dA_dt(self, x, t):
        """-(z_s - z) A^alpha before extinction, 0 once clamped."""
        A = self.A(x, t)
        live = np.asarray(t) < self.extinction_time(x)
        rate = np.where(live & (np.asarray(A) > 1.0), -self.drift * np.power(A, self.alpha), 0.0)
        return float(rate) if np.ndim(rate) == 0 else rate

    def extinction_time(self, x):
        """Time at which A(x, t) reaches the clamp."""
        p = 1.0 - self.alpha
        return np.power(x, p) / (self.drift * p)


def characteristic_A(c: Characteristic, x: float, t: float) -> float:
    """A(x, t) for x >= 1, t >= 0."""
    if x < 1 or t < 0:
        raise ParameterError(f"need x >= 1 and t >= 0, got x={x}, t={t}")
    return c.A(x, t)


def extinction_time(c: Characteristic, x: float) -> float:
    return float(c.extinction_time(x))


def chi_window(
    c: Characteristic,
    N1: float,
    N2: float,
    t: float,
    K_star: float,
    lower_dilation: float = LOWER_DILATION,
    upper_dilation: float = UPPER_DILATION,
) -> tuple[float, float]:
    """Open window (A(N1, 2t) - K*, A(N2, t/2) + K*)."""
    if not N1 < N2:
        raise ParameterError(f"need N1 < N2, got N1={N1}, N2={N2}")
    return (
        c.A(N1, lower_dilation * t) - K_star,
        c.A(N2, upper_dilation * t) + K_star,
    )


def two_pulse_windows(
    c: Characteristic, N: int, t: float, K_star: float
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Windows following the pulses on [N/4, N/2) and [3N/4, N)."""
    return (
        chi_window(c, N / 4, N / 2, t, K_star),
        chi_window(c, 3 * N / 4, N, t, K_star),
    )


def disjointness_horizon(c: Characteristic, N: int, K_star: float, tol: float = 1e-9) -> float:
    """First time at which the two pulse windows touch."""

    def gap(t: float) -> float:
        (_, hi1), (lo2, _) = two_pulse_windows(c, N, t, K_star)
        return lo2 - hi1

    if gap(0.0) <= 0:
        return 0.0
    hi = float(c.extinction_time(3 * N / 4)) / LOWER_DILATION
    if gap(hi) > 0:
        return hi
    lo = 0.0
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def window_mass(v: StateVector, window: tuple[float, float], normalization: float = 1.0) -> float:
    """Sum of v_i over indices strictly inside the window."""
    values = np.real(to_v(v).values)
    lo, hi = window
    i = np.arange(1, values.size + 1, dtype=float)
    inside = (i > lo) & (i < hi)
    if not inside.any():
        return 0.0
    return math.fsum(values[inside]) / normalization


def left_mass_edge(v: StateVector, eps: float) -> Optional[int]:
    """Smallest i whose cumulative mass reaches eps (None if it never does)."""
    cumulative = np.cumsum(np.real(to_v(v).values))
    hits = np.nonzero(cumulative >= eps)[0]
    return int(hits[0]) + 1 if hits.size else None


def duhamel_bound(c: Characteristic, N1: float, t: float) -> float:
    """(N1/N_t - 1) + log(N1/N_t) with N_t = A(N1, 2t)."""
    ratio = N1 / c.A(N1, LOWER_DILATION * t)
    return (ratio - 1.0) + math.log(ratio)


class Which(str, Enum):
    W1 = "W1"
    W2 = "W2"


@dataclass(frozen=True)
class Supersolution:
    """Exponential profile riding on a characteristic.

    W1(x, t) = exp((x - A(N1, 2t)) / D) left of the characteristic, 1 beyond.
    W2(x, t) = 1 left of A(N2, t/2), exp((A(N2, t/2) - x) / D) beyond.
    """

    which: Which
    D: float
    N_ref: int
    characteristic: Characteristic

    def __post_init__(self):
        if not self.D > 0:
            raise ParameterError(f"decay length D must be positive, got {self.D}")

    @property
    def dilation(self) -> float:
        return LOWER_DILATION if self.which == Which.W1 else UPPER_DILATION

    def edge(self, t: float) -> float:
        return self.characteristic.A(self.N_ref, self.dilation * t)

    def edge_rate(self, t: float) -> float:
        """d/dt of A(N_ref, dilation * t)."""
        return self.dilation * self.characteristic.dA_dt(self.N_ref, self.dilation * t)


def supersolution_values(s: Supersolution, t: float, N: int) -> np.ndarray:
    """Samples W(x, t) at x = 1..N (V-scale)."""
    x = np.arange(1, N + 1, dtype=float)
    A = s.edge(t)
    if s.which == Which.W1:
        return np.where(x < A, np.exp(np.minimum(x - A, 0.0) / s.D), 1.0)
    return np.where(x < A, 1.0, np.exp(np.minimum(A - x, 0.0) / s.D))


def supersolution_time_derivative(s: Supersolution, t: float, N: int) -> np.ndarray:
    """dW/dt by the chain rule through the moving edge (zero on the flat branch)."""
    W = supersolution_values(s, t, N)
    x = np.arange(1, N + 1, dtype=float)
    A = s.edge(t)
    rate = s.edge_rate(t)
    if s.which == Which.W1:
        return np.where(x < A, -W * rate / s.D, 0.0)
    return np.where(x >= A, W * rate / s.D, 0.0)


def comparison_constant(
    model: CoefficientModel, eq: EquilibriumState, sample_N: int = 4096
) -> float:
    """C = max_i (a_iQ_1 + b_{i+1} i/(i+1)) / (2 i^alpha) over i = 1..sample_N."""
    a, b = model.rates(sample_N + 1)
    i = np.arange(1, sample_N + 1, dtype=float)
    terms = a[:-1] * eq.z + b[1:] * i / (i + 1.0)
    return float((terms / (2.0 * i**model.alpha)).max())


def calibrate_D(model: CoefficientModel, eq: EquilibriumState, sample_N: int = 4096) -> float:
    """D = 4 C / (z_s - z), so that C / D = (z_s - z) / 4."""
    return 4.0 * comparison_constant(model, eq, sample_N) / eq.drift


def _residuals(model, eq, s: Supersolution, t: float, N: int, op) -> np.ndarray:
    W = supersolution_values(s, t, N)
    residual = supersolution_time_derivative(s, t, N) - matvec(op, W)
    if s.which == Which.W2:
        # 1 - V gains a_1 Q_1 at row 1 from the V_0 = 0 convention
        residual[0] -= model.rates(1)[0][0] * eq.z
    return residual


def supersolution_check(
    model: CoefficientModel,
    eq: EquilibriumState,
    s: Supersolution,
    t_grid: Sequence[float],
    N: int,
    tol: float = SUPERSOLUTION_TOL,
) -> SupersolutionReport:
    """
    Minimum over the grid of dW/dt - (LW) with L the prefix-sum operator.

    For W2 the row-1 source of the equation for 1 - V is included, so a
    nonnegative residual means W2 dominates 1 - V.
    """
    if len(t_grid) == 0:
        raise ParameterError("t_grid must be nonempty")
    op = assemble_integrated(model, eq, N)
    best = (math.inf, 0, 0.0)
    neg_lo, neg_hi = None, None
    for t in t_grid:
        residual = _residuals(model, eq, s, float(t), N, op)
        k = int(np.argmin(residual))
        if residual[k] < best[0]:
            best = (float(residual[k]), k + 1, float(t))
        negative = np.nonzero(residual < -tol)[0]
        if negative.size:
            lo, hi = int(negative[0]) + 1, int(negative[-1]) + 1
            neg_lo = lo if neg_lo is None else min(neg_lo, lo)
            neg_hi = hi if neg_hi is None else max(neg_hi, hi)
    report = SupersolutionReport(
        which=s.which.value,
        D=s.D,
        N_ref=s.N_ref,
        min_residual=best[0],
        argmin_index=best[1],
        argmin_time=best[2],
        negative_region=None if neg_lo is None else (neg_lo, neg_hi),
        tol=tol,
    )
    if not report.passed:
        logger.warning(
            "supersolution %s with D=%.4g negative (min %.3g at i=%d, t=%.4g)",
            s.which.value,
            s.D,
            report.min_residual,
            report.argmin_index,
            report.argmin_time,
        )
    return report


def estimate_N_star(
    model: CoefficientModel,
    eq: EquilibriumState,
    s: Supersolution,
    N: int,
    n_times: int = 64,
    tol: float = SUPERSOLUTION_TOL,
) -> float:
    """
    Smallest characteristic value down to which the residual stays >= -tol.

    Times are sampled from 0 to the extinction of the reference characteristic;
    the scan stops at the first failing time.
    """
    op = assemble_integrated(model, eq, N)
    t_end = float(s.characteristic.extinction_time(s.N_ref)) / s.dilation
    n_star = float(s.N_ref)
    for t in np.linspace(0.0, t_end, n_times + 1):
        if _residuals(model, eq, s, float(t), N, op).min() < -tol:
            break
        n_star = s.edge(float(t))
    return n_star


def minimum_principle_check(
    model: CoefficientModel,
    eq: EquilibriumState,
    W0: StateVector,
    T: float,
    rtol: float = 1e-8,
    n_samples: int = 64,
) -> MinimumPrincipleReport:
    """
    Evolve dW/dt = LW and compare interior extrema with the parabolic boundary.

    The boundary is t = 0, i = 1 and i = N; interior extrema may not beat the
    boundary ones by more than 10 * rtol * max|W0|.
    """
    if W0.coords != Coords.PREFIX:
        raise ParameterError(f"minimum principle acts on V-form data, got {W0.coords.value}-form")
    N = W0.N
    op = assemble_integrated(model, eq, N)
    times = np.linspace(0.0, T, n_samples + 1)
    traj = evolve_linear(op, W0, T, rtol, times)
    W = traj.values
    interior = W[1:, 1:-1]
    boundary = np.concatenate([W[0], W[:, 0], W[:, -1]])
    slack = 10.0 * rtol * max(float(np.abs(W0.values).max()), 1e-300)
    min_int, min_bdy = float(interior.min()), float(boundary.min())
    max_int, max_bdy = float(interior.max()), float(boundary.max())
    return MinimumPrincipleReport(
        T=T,
        N=N,
        min_interior=min_int,
        min_boundary=min_bdy,
        max_interior=max_int,
        max_boundary=max_bdy,
        slack=slack,
        passed_min=min_int >= min_bdy - slack,
        passed_max=max_int <= max_bdy + slack,
    )


def comparison_check(
    model: CoefficientModel,
    eq: EquilibriumState,
    v0: StateVector,
    N1: int,
    N2: int,
    D: float,
    T: float,
    rtol: float = 1e-8,
    n_samples: int = 64,
    N: Optional[int] = None,
) -> ComparisonReport:
    """
    Evolve v0 under the comparison operator and test V <= W1 and 1 - V <= W2.

    v0 must be nonnegative with unit mass supported in [N1, N2].
    """
    v = to_v(v0)
    N = v.N if N is None else N
    c = Characteristic.from_equilibrium(eq)
    w1 = Supersolution(Which.W1, D, N1, c)
    w2 = Supersolution(Which.W2, D, N2, c)
    op = assemble_tilde(model, eq, N)
    times = np.linspace(0.0, T, n_samples + 1)
    traj = evolve_linear(op, v, T, rtol, times)
    excess1 = excess2 = -math.inf
    for t, values in zip(traj.times, traj.values):
        V = np.cumsum(values)
        excess1 = max(excess1, float((V - supersolution_values(w1, t, N)).max()))
        excess2 = max(excess2, float((1.0 - V - supersolution_values(w2, t, N)).max()))
    return ComparisonReport(D=D, max_excess_W1=excess1, max_excess_W2=excess2)
