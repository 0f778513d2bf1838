"""Time evolution of the truncated linear semigroups."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError
from scipy.linalg.lapack import dgbtrf, dgbtrs

from ..errors import CoordinateError, IntegrationError, ParameterError
from ..models import NormSpec
from ..operators import (
    OperatorKind,
    OperatorMatrix,
    StateVector,
    matvec,
    norm,
)
from .stepper import AdaptiveStepper, StepStats, StopPredicate, Trajectory, normalize_output_times

logger = logging.getLogger(__name__)

# Explicit steps stay below STABILITY_FACTOR * 2 / rho.
STABILITY_FACTOR = 0.9
MAX_STEP_HALVINGS = 40
PIVOT_TOL = 1e-13


def _check_input(op: OperatorMatrix, v0: StateVector) -> None:
    if v0.coords != op.input_coords:
        raise CoordinateError(
            f"{op.kind.value} evolves {op.input_coords.value}-form data, "
            f"got {v0.coords.value}-form"
        )
    if v0.N != op.N:
        raise CoordinateError(f"initial state has length {v0.N}, operator has N={op.N}")


def stability_cap(op: OperatorMatrix) -> float:
    return STABILITY_FACTOR * 2.0 / op.rate_scale


def _attach(traj: Trajectory, op: OperatorMatrix, v0: StateVector, norms: Sequence[NormSpec]):
    traj.coords = v0.coords
    traj.eq = v0.eq
    traj.diagnostics["mass"] = np.array([math.fsum(np.real(row)) for row in traj.values])
    for spec in norms:
        key = spec.family.value if spec.family.value != "Xk" else f"X{spec.k:g}"
        traj.diagnostics[key] = np.array(
            [norm(spec, v0.eq, traj.state(k)) for k in range(len(traj))]
        )
    return traj


def evolve_linear(
    op: OperatorMatrix,
    v0: StateVector,
    T: float,
    rtol: float = 1e-8,
    output_times: Optional[Sequence[float]] = None,
    stop: Optional[StopPredicate] = None,
    norms: Sequence[NormSpec] = (),
) -> Trajectory:
    """
    Evolve dv/dt = Lv with the adaptive explicit stepper.

    Args:
        op: Assembled operator
        v0: Initial state in the operator's input coordinates
        T: Final time
        rtol: Local relative tolerance
        output_times: Snapshot times
        stop: Early termination predicate evaluated at snapshots
        norms: Norms recorded as diagnostics at every snapshot

    Returns:
        Trajectory with mass and norm diagnostics
    """
    _check_input(op, v0)
    stepper = AdaptiveStepper(rtol=rtol, dt_max=stability_cap(op))
    traj = stepper.run(lambda t, y: matvec(op, y), v0.values, T, output_times, stop=stop)
    return _attach(traj, op, v0, norms)


class CrankNicolsonSolver:
    """Solves (I - h/2 L) x = r for a fixed operator, caching factorizations by h.

    The tridiagonal core is factored once per step size with the LAPACK
    banded LU, whose pivots are checked; the dense first row and first
    column are a rank-two correction applied with the Woodbury identity.
    """

    def __init__(self, op: OperatorMatrix):
        self.op = op
        self._cache: dict[float, tuple] = {}

    def factor(self, h: float):
        """Banded LU, Woodbury factors and capacitance inverse for step h.

        Raises:
            LinAlgError: a pivot of the banded LU or the capacitance matrix vanishes
        """
        if h in self._cache:
            return self._cache[h]
        op = self.op
        bands = np.zeros((4, op.N))
        bands[1:] = -0.5 * h * op.tridiagonal_bands()
        bands[2] += 1.0
        scale = max(1.0, float(np.abs(bands).max()))
        lu, piv, info = dgbtrf(bands, 1, 1)
        pivots = np.abs(lu[2])
        if info != 0 or pivots.min() < PIVOT_TOL * scale:
            raise LinAlgError(f"singular tridiagonal system (smallest pivot {pivots.min():.3g})")
        factors = (lu, piv)
        Z = S_inv = None
        if op.has_arrow:
            n = op.N
            U = np.zeros((n, 2))
            U[:, 0] = 0.5 * h * op.first_col
            U[0, 1] = 0.5 * h
            Z = self._banded_solve(factors, U)
            W = np.zeros((n, 2))
            W[0, 0] = 1.0
            W[2:, 1] = op.first_row[2:]
            S = np.eye(2) - W.T @ Z
            if abs(np.linalg.det(S)) < 1e-14:
                raise LinAlgError("singular capacitance matrix")
            S_inv = np.linalg.inv(S)
        self._cache[h] = (factors, Z, S_inv)
        return self._cache[h]

    @staticmethod
    def _banded_solve(factors, r: np.ndarray) -> np.ndarray:
        lu, piv = factors
        x, info = dgbtrs(lu, 1, 1, r.reshape(r.shape[0], -1), piv)
        if info != 0:
            raise LinAlgError(f"banded solve failed (info={info})")
        return x.reshape(r.shape)

    def solve(self, h: float, r: np.ndarray) -> np.ndarray:
        factors, Z, S_inv = self.factor(h)
        if np.iscomplexobj(r):
            return self.solve(h, r.real) + 1j * self.solve(h, r.imag)
        x = self._banded_solve(factors, r)
        if Z is not None:
            wx = np.array([x[0], math.fsum(self.op.first_row[2:] * x[2:])])
            x = x + Z @ (S_inv @ wx)
        return x

    def step(self, h: float, y: np.ndarray) -> np.ndarray:
        """One trapezoidal step of size h."""
        return self.solve(h, y + 0.5 * h * matvec(self.op, y))


def evolve_linear_implicit(
    op: OperatorMatrix,
    v0: StateVector,
    T: float,
    dt: float,
    output_times: Optional[Sequence[float]] = None,
    stop: Optional[StopPredicate] = None,
    norms: Sequence[NormSpec] = (),
) -> Trajectory:
    """
    Evolve dv/dt = Lv with fixed-step Crank-Nicolson.

    Between consecutive output times the interval is split into equal steps
    no longer than dt, so snapshots are exact step ends.

    Raises:
        IntegrationError: the step matrix stayed singular after 40 halvings
    """
    _check_input(op, v0)
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    grid = normalize_output_times(T, output_times)
    solver = CrankNicolsonSolver(op)
    stats = StepStats()

    y = np.array(v0.values, copy=True)
    snaps = [y.copy()]
    times = [0.0]
    stopped = stop is not None and bool(stop(0.0, y))
    t = 0.0
    for t_out in grid[1:]:
        if stopped:
            break
        span = t_out - t
        n_steps = max(1, math.ceil(span / dt - 1e-9))
        h = span / n_steps
        for _ in range(MAX_STEP_HALVINGS + 1):
            try:
                solver.factor(h)
                break
            except LinAlgError:
                logger.debug("singular Crank-Nicolson matrix at h=%.3g, halving", h)
                n_steps *= 2
                h = span / n_steps
        else:
            raise IntegrationError(
                f"step matrix singular after {MAX_STEP_HALVINGS} halvings", last_good_time=t
            )
        for _ in range(n_steps):
            y = solver.step(h, y)
            stats.record(h)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state before t={t_out:.6g}", last_good_time=t)
        t = float(t_out)
        snaps.append(y.copy())
        times.append(t)
        if stop is not None and stop(t, y):
            stopped = True

    traj = Trajectory(
        times=np.asarray(times), values=np.asarray(snaps), stats=stats, stopped_early=stopped
    )
    return _attach(traj, op, v0, norms)


def evolve(
    op: OperatorMatrix,
    v0: StateVector,
    T: float,
    rtol: float = 1e-8,
    output_times: Optional[Sequence[float]] = None,
    scheme: str = "explicit",
    dt: Optional[float] = None,
    stop: Optional[StopPredicate] = None,
    norms: Sequence[NormSpec] = (),
) -> Trajectory:
    """Dispatch to the explicit or implicit integrator."""
    if scheme == "explicit":
        return evolve_linear(op, v0, T, rtol, output_times, stop=stop, norms=norms)
    if scheme == "implicit":
        step = dt if dt is not None else 0.5 / op.rate_scale
        return evolve_linear_implicit(op, v0, T, step, output_times, stop=stop, norms=norms)
    raise ParameterError(f"unknown scheme {scheme!r}; expected 'explicit' or 'implicit'")


def tail_mass(values: np.ndarray, start: int) -> float:
    """sum_{i >= start} |v_i| (1-based start), the truncation headroom check."""
    return float(np.sum(np.abs(values[start - 1 :])))


@dataclass(eq=False)
class DuhamelComparison:
    """Full and comparison flows from the same data and their l1 gap."""

    full: Trajectory
    tilde: Trajectory
    gap: np.ndarray


def duhamel_gap(
    full: OperatorMatrix,
    tilde: OperatorMatrix,
    u0: StateVector,
    T: float,
    rtol: float = 1e-8,
    output_times: Optional[Sequence[float]] = None,
    scheme: str = "explicit",
    stop: Optional[StopPredicate] = None,
) -> DuhamelComparison:
    """
    Evolve u0 under both operators and record sum_i |u_i(t) - v_i(t)|.

    The explicit run of the full flow fixes the snapshot grid; the comparison
    flow is sampled on the same grid.
    """
    if full.kind != OperatorKind.FULL or tilde.kind != OperatorKind.TILDE:
        raise CoordinateError("duhamel_gap needs a full-L and a tilde-L operator")
    u = evolve(full, u0, T, rtol, output_times, scheme=scheme, stop=stop)
    if u.times[-1] == 0.0:
        return DuhamelComparison(full=u, tilde=u, gap=np.zeros(1))
    v = evolve(tilde, u0, float(u.times[-1]), rtol, u.times, scheme=scheme)
    gap = np.sum(np.abs(u.values - v.values), axis=1)
    return DuhamelComparison(full=u, tilde=v, gap=gap)
