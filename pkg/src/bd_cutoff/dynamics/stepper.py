"""Adaptive Dormand-Prince 5(4) stepping with Hermite dense output."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..equilibrium import EquilibriumState
from ..errors import IntegrationError, ParameterError, StiffnessError
from ..operators import Coords, StateVector

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]
StopPredicate = Callable[[float, np.ndarray], bool]

# Dormand-Prince tableau; the last stage is evaluated at the new point (FSAL).
DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# fifth-order minus embedded fourth-order weights
DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
MAX_ADMISSIBILITY_HALVINGS = 60


@dataclass
class StepStats:
    """Step-size statistics of one integration."""

    accepted: int = 0
    rejected: int = 0
    dt_min: float = math.inf
    dt_max: float = 0.0
    rhs_evals: int = 0

    def record(self, dt: float) -> None:
        self.accepted += 1
        self.dt_min = min(self.dt_min, dt)
        self.dt_max = max(self.dt_max, dt)

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "dt_min": self.dt_min if self.accepted else 0.0,
            "dt_max": self.dt_max,
            "rhs_evals": self.rhs_evals,
        }


@dataclass(eq=False)
class Trajectory:
    """Snapshots at requested output times plus diagnostics."""

    times: np.ndarray
    values: np.ndarray = field(repr=False)
    coords: Optional[Coords] = None
    eq: Optional[EquilibriumState] = field(default=None, repr=False)
    stats: StepStats = field(default_factory=StepStats)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def state(self, k: int) -> StateVector:
        """Snapshot k as a StateVector (linear flows only)."""
        if self.coords is None or self.eq is None:
            raise ParameterError("this trajectory does not carry perturbation coordinates")
        return StateVector(self.coords, self.values[k], self.eq)


def normalize_output_times(T: float, output_times: Optional[Sequence[float]]) -> np.ndarray:
    """Sorted output grid on [0, T] that starts at 0 and ends at T."""
    if not T > 0:
        raise ParameterError(f"final time must be positive, got T={T}")
    if output_times is None:
        return np.array([0.0, T])
    grid = np.asarray(sorted(set(float(t) for t in output_times) | {0.0, float(T)}))
    if grid[0] < 0 or grid[-1] > T:
        raise ParameterError(f"output times must lie in [0, {T}]")
    return grid


def hermite(t0: float, y0, f0, t1: float, y1, f1, t: float) -> np.ndarray:
    """Cubic Hermite interpolant between two accepted steps."""
    h = t1 - t0
    s = (t - t0) / h
    s2, s3 = s * s, s * s * s
    return (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * f0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * f1
    )


class AdaptiveStepper:
    """Embedded 5(4) explicit stepper with step rejection and dense output."""

    def __init__(
        self,
        rtol: float = 1e-8,
        atol: Optional[float] = None,
        dt_max: float = math.inf,
        dt_min_ratio: float = 1e-14,
    ):
        """
        Initialize the stepper.

        Args:
            rtol: Relative local tolerance
            atol: Absolute local tolerance (default rtol * max|y0|)
            dt_max: Stability cap on the step size
            dt_min_ratio: Steps below dt_min_ratio * T count as underflow
        """
        if not rtol > 0:
            raise ParameterError(f"rtol must be positive, got {rtol}")
        self.rtol = rtol
        self.atol = atol
        self.dt_max = dt_max
        self.dt_min_ratio = dt_min_ratio

    def _initial_dt(self, y0: np.ndarray, f0: np.ndarray, T: float) -> float:
        d0 = float(np.abs(y0).max())
        d1 = float(np.abs(f0).max())
        dt = 0.01 * d0 / d1 if d0 > 0 and d1 > 0 else 1e-3 * T
        return min(dt, self.dt_max, T)

    def _step(self, rhs: Rhs, t: float, y: np.ndarray, f0: np.ndarray, dt: float):
        k = [f0]
        for s in range(1, 7):
            incr = sum(a * kj for a, kj in zip(DP_A[s], k) if a != 0.0)
            k.append(rhs(t + DP_C[s] * dt, y + dt * incr))
        # stage 7 was evaluated at y_new (FSAL)
        y_new = y + dt * sum(b * kj for b, kj in zip(DP_B, k) if b != 0.0)
        err = dt * sum(e * kj for e, kj in zip(DP_E, k) if e != 0.0)
        return y_new, k[6], err

    def run(
        self,
        rhs: Rhs,
        y0: np.ndarray,
        T: float,
        output_times: Optional[Sequence[float]] = None,
        stop: Optional[StopPredicate] = None,
        admissible: Optional[Callable[[np.ndarray], bool]] = None,
        clip: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> Trajectory:
        """
        Integrate y' = rhs(t, y) from 0 to T.

        Args:
            rhs: Right-hand side
            y0: Initial value (real or complex)
            T: Final time; the last accepted step lands exactly on T
            output_times: Snapshot times in [0, T]
            stop: Predicate evaluated at each snapshot; True ends the run there
            admissible: Predicate on a candidate step; False rejects and halves dt
            clip: Map applied to every accepted state

        Returns:
            Trajectory with snapshots and step statistics

        Raises:
            IntegrationError: non-finite state (carries the last good time)
            StiffnessError: step size underflow. Near a finite-time blow-up the
                reported last good time is the blow-up of the numerical solution,
                which differs from the exact one by the accumulated tolerance.
        """
        grid = normalize_output_times(T, output_times)
        y = np.array(y0, copy=True)
        if not np.all(np.isfinite(y)):
            raise IntegrationError("initial state is not finite", last_good_time=None)
        scale0 = float(np.abs(y).max())
        atol = self.atol if self.atol is not None else self.rtol * max(scale0, 1e-300)
        stats = StepStats()

        t = 0.0
        f = rhs(t, y)
        stats.rhs_evals += 1
        dt = self._initial_dt(y, f, T)
        dt_floor = self.dt_min_ratio * T

        snaps = [y.copy()]
        times = [0.0]
        next_out = 1
        stopped = stop is not None and bool(stop(0.0, y))
        halvings = 0

        while not stopped and t < T:
            dt = min(dt, self.dt_max, T - t)
            if dt < dt_floor and T - t > dt_floor:
                raise StiffnessError(
                    f"step size underflow at t={t:.6g} (dt={dt:.3g}); "
                    "use a larger rtol or the implicit scheme",
                    last_good_time=t,
                )
            y_new, f_new, err = self._step(rhs, t, y, f, dt)
            stats.rhs_evals += 6
            if not np.all(np.isfinite(y_new)):
                if dt > dt_floor:
                    stats.rejected += 1
                    dt *= 0.5
                    continue
                raise IntegrationError(f"non-finite state after t={t:.6g}", last_good_time=t)

            scale = atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.max(np.abs(err) / scale))
            if err_norm > 1.0:
                stats.rejected += 1
                dt *= max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
                continue
            if admissible is not None and not admissible(y_new):
                stats.rejected += 1
                halvings += 1
                if halvings > MAX_ADMISSIBILITY_HALVINGS:
                    raise IntegrationError(
                        f"no admissible step from t={t:.6g}", last_good_time=t
                    )
                dt *= 0.5
                continue
            halvings = 0
            if clip is not None:
                y_new = clip(y_new)
                f_new = rhs(t + dt, y_new)
                stats.rhs_evals += 1

            t_new = T if T - (t + dt) <= 1e-15 * T else t + dt
            stats.record(t_new - t)
            while next_out < len(grid) and grid[next_out] <= t_new:
                t_out = grid[next_out]
                y_out = y_new if t_out == t_new else hermite(t, y, f, t_new, y_new, f_new, t_out)
                snaps.append(np.array(y_out, copy=True))
                times.append(float(t_out))
                next_out += 1
                if stop is not None and stop(float(t_out), y_out):
                    stopped = True
                    break

            t, y, f = t_new, y_new, f_new
            factor = MAX_FACTOR if err_norm == 0.0 else SAFETY * err_norm ** -0.2
            dt *= min(MAX_FACTOR, max(MIN_FACTOR, factor))

        logger.debug(
            "integration to t=%.6g: %d accepted, %d rejected, dt in [%.3g, %.3g]",
            t,
            stats.accepted,
            stats.rejected,
            stats.dt_min,
            stats.dt_max,
        )
        return Trajectory(
            times=np.asarray(times),
            values=np.asarray(snaps),
            stats=stats,
            stopped_early=stopped,
        )
