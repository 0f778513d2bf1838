"""Detailed-balance equilibria and their mass series."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ParameterError, SupercriticalError, TruncationError
from .models import CoefficientModel

logger = logging.getLogger(__name__)

# Bracket top for the monomer density, as a fraction of z_s.
Z_BRACKET_TOP = 1.0 - 1e-9
MAX_BISECTION_STEPS = 200
MAX_SERIES_N = 2**24


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Detailed-balance solution Q_1..Q_N at monomer density z.

    ``Q`` is linear scale and underflows to zero for large i; ``log_Q`` is
    the log-scale accumulator and stays finite for every stored index.
    Entry k of each array holds index k + 1.
    """

    model: CoefficientModel
    z: float
    Q: np.ndarray = field(repr=False)
    log_Q: np.ndarray = field(repr=False)
    mass: float
    tail_bound: float
    N: int
    ratio: float
    tail_ratio: float = 0.0

    @property
    def z_s(self) -> float:
        return self.model.critical_density

    @property
    def drift(self) -> float:
        """z_s - z, the transport speed of the characteristics."""
        return self.z_s - self.z

    def extend(self, N: int) -> "EquilibriumState":
        """Return a state holding at least N entries (self if already long enough)."""
        if N <= self.N:
            return self
        return compute_Q(self.model, self.z, N)

    def detailed_balance_residual(self) -> float:
        """max_i |b_{i+1}Q_{i+1} - a_iQ_iQ_1| / (a_iQ_iQ_1) over normal-range entries."""
        a, b = self.model.rates(self.N)
        lhs = b[1:] * self.Q[1:]
        rhs = a[:-1] * self.Q[:-1] * self.Q[0]
        normal = self.Q[1:] > 1e-300
        if not normal.any():
            return 0.0
        return float((np.abs(lhs - rhs)[normal] / rhs[normal]).max())


@dataclass(frozen=True)
class MassEstimate:
    """Truncated mass used as a lower bound for the critical mass."""

    value: float
    lower_bound: bool = True
    saturated: bool = False


@dataclass
class _Series:
    Q: np.ndarray
    log_Q: np.ndarray
    partial: float
    tail: float
    sup_ratio: float


def _series(model: CoefficientModel, z: float, N: int) -> _Series:
    """Q_1..Q_N, the truncated mass and a geometric tail bound (never raises)."""
    a, b = model.rates(4 * N + 1)
    # one-step ratios r_i = a_i z / b_{i+1}, entry k holds i = k + 1
    steps = a[:-1] * z / b[1:]

    Q = np.empty(N)
    Q[0] = z
    Q[1:] = z * np.cumprod(steps[: N - 1])
    log_Q = np.empty(N)
    log_Q[0] = math.log(z)
    log_Q[1:] = math.log(z) + np.cumsum(np.log(steps[: N - 1]))

    # sup over i >= N: window [N, 4N] together with the limit z / z_s
    sup_ratio = max(float(steps[N - 1 :].max()), z / model.critical_density)
    i = np.arange(1, N + 1, dtype=float)
    partial = math.fsum(i * Q)
    if sup_ratio >= 1.0:
        tail = math.inf
    else:
        r = sup_ratio
        tail = float(Q[-1]) * (N * r / (1.0 - r) + r / (1.0 - r) ** 2)
    return _Series(Q=Q, log_Q=log_Q, partial=partial, tail=tail, sup_ratio=sup_ratio)


def _check_z(model: CoefficientModel, z: float) -> None:
    if z <= 0:
        raise ParameterError(f"monomer density must be positive, got z={z}")
    if z >= model.critical_density:
        raise SupercriticalError(
            f"z={z} is not below the critical density z_s={model.critical_density}"
        )


def compute_Q(model: CoefficientModel, z: float, N: int) -> EquilibriumState:
    """
    Solve detailed balance Q_1 = z, Q_{i+1} = a_i Q_i z / b_{i+1}.

    Args:
        model: Coefficient model
        z: Monomer density, 0 < z < z_s
        N: Number of stored entries (>= 2)

    Returns:
        EquilibriumState whose mass includes the certified geometric tail

    Raises:
        SupercriticalError: z >= z_s
        TruncationError: the one-step ratio past N is not below 1
    """
    _check_z(model, z)
    if N < 2:
        raise TruncationError(f"equilibrium needs N >= 2, got {N}")
    s = _series(model, z, N)
    if not math.isfinite(s.tail):
        raise TruncationError(
            f"geometric tail ratio {s.sup_ratio:.6g} >= 1 at N={N}; increase N"
        )
    return EquilibriumState(
        model=model,
        z=z,
        Q=s.Q,
        log_Q=s.log_Q,
        mass=s.partial + s.tail,
        tail_bound=s.tail,
        N=N,
        ratio=z / model.critical_density,
        tail_ratio=s.sup_ratio,
    )


def mass_at(model: CoefficientModel, z: float, N: int) -> float:
    """Mass sum_i i Q_i at density z, truncated at N plus the tail bound."""
    return compute_Q(model, z, N).mass


def second_moment(eq: EquilibriumState, N: Optional[int] = None) -> float:
    """sum_{i<=N} i^2 Q_i, the normalizer of the zero mode."""
    N = eq.N if N is None else N
    if N > eq.N:
        eq = eq.extend(N)
    i = np.arange(1, N + 1, dtype=float)
    return math.fsum(i * i * eq.Q[:N])


def mu_s_estimate(model: CoefficientModel, N: int) -> MassEstimate:
    """
    Lower bound for the critical mass from the mass at z = z_s (1 - 1e-6).

    The estimate is flagged saturated when the series has not settled at N
    (tail bound above the partial sum, or overflow).
    """
    if N < 64:
        raise TruncationError(f"mu_s estimate needs N >= 64, got {N}")
    z = model.critical_density * (1.0 - 1e-6)
    with np.errstate(over="ignore", invalid="ignore"):
        s = _series(model, z, N)
    saturated = (not math.isfinite(s.partial)) or (not math.isfinite(s.tail)) or (
        s.tail > s.partial
    )
    if saturated:
        logger.debug("mu_s estimate saturated at N=%d (partial=%.6g)", N, s.partial)
    return MassEstimate(value=s.partial, saturated=saturated)


def _mass_vs(model: CoefficientModel, z: float, mu: float, tol: float, N0: int) -> tuple[int, int]:
    """
    Compare mass(z) with mu, growing the truncation until it decides.

    Returns:
        (sign, N) with sign -1 if mass(z) < mu - tol, +1 if above mu + tol,
        0 if within tol
    """
    N = N0
    while N <= MAX_SERIES_N:
        s = _series(model, z, N)
        if s.partial > mu + tol:
            return 1, N
        if s.tail <= tol / 10:
            mass = s.partial + s.tail
            if mass < mu - tol:
                return -1, N
            if mass > mu + tol:
                return 1, N
            return 0, N
        N *= 2
    raise ConvergenceError(f"mass series at z={z} did not settle below N={MAX_SERIES_N}")


def solve_z(
    model: CoefficientModel,
    mu: float,
    tol: float = 1e-10,
    N: int = 1024,
    mu_s_N: int = 100_000,
) -> EquilibriumState:
    """
    Find the monomer density whose equilibrium carries mass mu.

    Bisection on z in (0, z_s (1 - 1e-9)); each mass evaluation doubles its
    truncation until the tail bound is below tol / 10.

    Args:
        model: Coefficient model
        mu: Prescribed mass, below the critical mass
        tol: Absolute tolerance on the mass
        N: Initial truncation for the series
        mu_s_N: Truncation used for the critical-mass estimate

    Raises:
        SupercriticalError: mu at or above the estimated critical mass
        ConvergenceError: tolerance not reached in 200 bisection steps
    """
    if mu <= 0:
        raise ParameterError(f"mass must be positive, got mu={mu}")
    if tol <= 0:
        raise ParameterError(f"tolerance must be positive, got tol={tol}")
    estimate = mu_s_estimate(model, mu_s_N)
    if not estimate.saturated and mu >= estimate.value:
        raise SupercriticalError(
            f"mu={mu} is not below the estimated critical mass {estimate.value:.6g}"
        )

    lo, hi = 0.0, model.critical_density * Z_BRACKET_TOP
    for step in range(MAX_BISECTION_STEPS):
        z = 0.5 * (lo + hi)
        if not lo < z < hi:
            break
        sign, used_N = _mass_vs(model, z, mu, tol, N)
        logger.debug("bisection step %d: z=%.17g sign=%d N=%d", step, z, sign, used_N)
        if sign == 0:
            return compute_Q(model, z, max(used_N, N))
        if sign < 0:
            lo = z
        else:
            hi = z
    raise ConvergenceError(
        f"mass tolerance {tol} not reached in {MAX_BISECTION_STEPS} bisection steps (mu={mu})"
    )
