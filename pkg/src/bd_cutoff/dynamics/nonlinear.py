"""The truncated nonlinear Becker-Doring system and the linearization check."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..equilibrium import EquilibriumState
from ..errors import ParameterError
from ..models import CoefficientModel, LinearizationReport
from ..operators import StateVector, assemble_full, mass_functional, to_v
from .linear import evolve_linear
from .stepper import AdaptiveStepper, StopPredicate, Trajectory

logger = logging.getLogger(__name__)

# Steps producing c_i below -NEGATIVITY_TOL * max c are rejected; smaller
# negative round-off is clipped.
NEGATIVITY_TOL = 1e-14


class BeckerDoringSystem:
    """Right-hand side of the truncated system with J_N = 0."""

    def __init__(self, model: CoefficientModel, N: int):
        if N < 2:
            raise ParameterError(f"nonlinear system needs N >= 2, got {N}")
        self.model = model
        self.N = N
        a, b = model.rates(N)
        self.a = a[:-1]  # a_1..a_{N-1}
        self.b_next = b[1:]  # b_2..b_N
        self.i = np.arange(1, N + 1, dtype=float)

    def fluxes(self, c: np.ndarray) -> np.ndarray:
        """J_i = a_i c_1 c_i - b_{i+1} c_{i+1} for i = 1..N-1."""
        return self.a * c[0] * c[:-1] - self.b_next * c[1:]

    def __call__(self, t: float, c: np.ndarray) -> np.ndarray:
        J = self.fluxes(c)
        dc = np.empty_like(c)
        dc[0] = -J[0] - math.fsum(J)
        dc[1:-1] = J[:-1] - J[1:]
        dc[-1] = J[-1]
        return dc

    def mass(self, c: np.ndarray) -> float:
        return math.fsum(self.i * c)

    def rate_scale(self, mass: float) -> float:
        """max_i (a_i mu + b_{i+1}), with mu bounding c_1."""
        return float((self.a * mass + self.b_next).max())


def _admissible(c: np.ndarray) -> bool:
    return float(c.min()) >= -NEGATIVITY_TOL * float(c.max())


def _clip(c: np.ndarray) -> np.ndarray:
    return np.maximum(c, 0.0)


def evolve_nonlinear(
    model: CoefficientModel,
    c0: np.ndarray,
    T: float,
    rtol: float = 1e-8,
    output_times: Optional[Sequence[float]] = None,
    stop: Optional[StopPredicate] = None,
) -> Trajectory:
    """
    Integrate dc/dt for the truncated system.

    Args:
        model: Coefficient model
        c0: Nonnegative initial concentrations c_1..c_N
        T: Final time
        rtol: Local relative tolerance
        output_times: Snapshot times

    Returns:
        Trajectory of concentrations with a "mass" diagnostic
    """
    c0 = np.asarray(c0, dtype=float)
    if c0.ndim != 1 or not np.all(np.isfinite(c0)):
        raise ParameterError("initial concentrations must be a finite 1-d array")
    if c0.min() < 0:
        raise ParameterError(f"initial concentrations must be nonnegative (min {c0.min():.3g})")
    system = BeckerDoringSystem(model, c0.size)
    mass0 = system.mass(c0)
    stepper = AdaptiveStepper(rtol=rtol, dt_max=1.8 / system.rate_scale(mass0))
    traj = stepper.run(
        system, c0, T, output_times, stop=stop, admissible=_admissible, clip=_clip
    )
    traj.diagnostics["mass"] = np.array([system.mass(row) for row in traj.values])
    return traj


def linearization_check(
    model: CoefficientModel,
    eq: EquilibriumState,
    h0: StateVector,
    eps_list: Sequence[float],
    T: float,
    rtol: float = 1e-10,
) -> LinearizationReport:
    """
    Compare (c_eps(T) - Q) / eps from the nonlinear flow with e^{LT} h0.

    Initial data c_eps = Q (1 + eps h0). Gaps are X_1 distances in v-form.

    Raises:
        ParameterError: h0 carries mass, or some eps makes c_eps negative
    """
    v0 = to_v(h0)
    N = v0.N
    eq = eq.extend(N)
    scale = float(np.sum(np.abs(v0.values)))
    if abs(mass_functional(eq, v0)) > 1e-12 * max(scale, 1e-300):
        raise ParameterError("linearization data must have zero mass; project it first")
    i = np.arange(1, N + 1, dtype=float)
    Q = eq.Q[:N]

    op = assemble_full(model, eq, N)
    linear = evolve_linear(op, v0, T, rtol)
    v_lin = linear.final

    gaps, drifts = [], []
    for eps in eps_list:
        c0 = Q + eps * v0.values / i
        if c0.min() < 0:
            raise ParameterError(f"eps={eps} makes the initial concentrations negative")
        traj = evolve_nonlinear(model, c0, T, rtol)
        g = i * (traj.final - Q) / eps
        gaps.append(float(np.sum(np.abs(g - v_lin))))
        drifts.append(abs(float(traj.diagnostics["mass"][-1] - traj.diagnostics["mass"][0])))
        logger.info("linearization gap at eps=%.3g: %.6g", eps, gaps[-1])

    ratios = [gaps[k] / gaps[k + 1] for k in range(len(gaps) - 1) if gaps[k + 1] > 0]
    return LinearizationReport(
        T=T,
        N=N,
        eps=list(eps_list),
        gaps=gaps,
        ratios=ratios,
        linear_mass=float(linear.diagnostics["mass"][-1]),
        nonlinear_mass_drift=drifts,
    )
