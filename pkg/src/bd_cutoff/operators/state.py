"""State vectors, coordinate changes, norms and the mass functional."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..equilibrium import EquilibriumState, second_moment
from ..errors import CoordinateError, ParameterError, SaturationError
from ..models import NormFamily, NormSpec

logger = logging.getLogger(__name__)


class Coords(str, Enum):
    """Coordinate convention of a perturbation."""

    H = "h"  # relative perturbation, c_i = Q_i (1 + h_i)
    V = "v"  # mass-weighted, v_i = i Q_i h_i
    PREFIX = "V"  # running sums V_i = v_1 + ... + v_i


@dataclass(frozen=True, eq=False)
class StateVector:
    """A perturbation of the equilibrium in one coordinate convention."""

    coords: Coords
    values: np.ndarray = field(repr=False)
    eq: EquilibriumState = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.size == 0:
            raise CoordinateError(f"state values must be a nonempty 1-d array, got {values.shape}")
        if not np.iscomplexobj(values):
            values = values.astype(float, copy=False)
        object.__setattr__(self, "values", values)
        if self.eq.N < values.size:
            object.__setattr__(self, "eq", self.eq.extend(values.size))

    @property
    def N(self) -> int:
        return int(self.values.size)

    @property
    def is_complex(self) -> bool:
        return bool(np.iscomplexobj(self.values))

    def with_values(self, values: np.ndarray) -> "StateVector":
        """Same coordinates and equilibrium, new values."""
        return StateVector(self.coords, values, self.eq)

    def __add__(self, other: "StateVector") -> "StateVector":
        _require_match(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "StateVector") -> "StateVector":
        _require_match(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "StateVector":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def _require_match(x: StateVector, y: StateVector) -> None:
    if x.coords != y.coords or x.N != y.N:
        raise CoordinateError(
            f"cannot combine {x.coords.value}-form (N={x.N}) with {y.coords.value}-form (N={y.N})"
        )


def _log_weight(eq: EquilibriumState, n: int) -> np.ndarray:
    """log(i Q_i) for i = 1..n."""
    return eq.log_Q[:n] + np.log(np.arange(1, n + 1, dtype=float))


def to_v(x: StateVector) -> StateVector:
    """Convert to mass-weighted v-form."""
    if x.coords == Coords.V:
        return x
    if x.coords == Coords.PREFIX:
        return from_V(x)
    weight = np.exp(_log_weight(x.eq, x.N))
    return StateVector(Coords.V, weight * x.values, x.eq)


def to_h(x: StateVector) -> StateVector:
    """Convert to h-form; fails where 1 / (i Q_i) overflows on the support."""
    v = to_v(x)
    if x.coords == Coords.H:
        return x
    with np.errstate(over="ignore", invalid="ignore"):
        inv_weight = np.exp(-_log_weight(v.eq, v.N))
        h = np.where(v.values != 0, v.values * inv_weight, 0.0)
    if not np.all(np.isfinite(h)):
        raise SaturationError("h-form overflows: the support extends past the Q underflow point")
    return StateVector(Coords.H, h, v.eq)


def to_V(x: StateVector) -> StateVector:
    """Running prefix sums of the v-form, V_0 = 0."""
    if x.coords == Coords.PREFIX:
        return x
    v = to_v(x)
    return StateVector(Coords.PREFIX, np.cumsum(v.values), v.eq)


def from_V(x: StateVector) -> StateVector:
    """v_i = V_i - V_{i-1} with V_0 = 0."""
    if x.coords != Coords.PREFIX:
        raise CoordinateError(f"from_V expects V-form, got {x.coords.value}-form")
    return StateVector(Coords.V, np.diff(x.values, prepend=0.0), x.eq)


def _fsum(values: np.ndarray) -> complex:
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real), math.fsum(values.imag))
    return math.fsum(values)


def mass_functional(eq: EquilibriumState, h: StateVector) -> float:
    """mu(h) = sum_i Q_i i h_i = sum_i v_i."""
    return _fsum(to_v(h).values)


def zero_mode(eq: EquilibriumState, N: int) -> StateVector:
    """The kernel vector xi_i = i / sum_j Q_j j^2, returned in v-form."""
    eq = eq.extend(N)
    i = np.arange(1, N + 1, dtype=float)
    return StateVector(Coords.V, eq.Q[:N] * i * i / second_moment(eq, N), eq)


def project_zero_mass(eq: EquilibriumState, h: StateVector) -> StateVector:
    """h - xi mu(h), returned in the coordinates of h."""
    v = to_v(h)
    xi = zero_mode(v.eq, v.N)
    projected = v - xi * mass_functional(eq, v)
    if h.coords == Coords.H:
        return to_h(projected)
    if h.coords == Coords.PREFIX:
        return to_V(projected)
    return projected


def eta_threshold(eq: EquilibriumState) -> float:
    """Upper limit log(z_s / z) for the exponential weight."""
    return math.log(eq.z_s / eq.z)


def norm(spec: NormSpec, eq: EquilibriumState, x: StateVector) -> float:
    """
    Evaluate a norm of the perturbation from its mass-weighted values.

    Args:
        spec: Norm family and its parameter
        eq: Equilibrium the perturbation lives on
        x: Perturbation in any coordinates

    Returns:
        X_k: sum i^(k-1) |v_i|; l2Q: (sum v_i^2 / (Q_i i^2))^(1/2);
        Y_eta: sum e^(eta i) |v_i| / i

    Raises:
        ParameterError: eta at or above log(z_s / z)
        SaturationError: the weighted sum overflows
    """
    v = to_v(x)
    mod = np.abs(v.values)
    i = np.arange(1, v.N + 1, dtype=float)

    if spec.family == NormFamily.XK:
        if spec.k == 1.0:
            return float(np.sum(mod))
        return float(np.sum(i ** (spec.k - 1.0) * mod))

    support = mod > 0
    if spec.family == NormFamily.L2Q:
        log_Q = v.eq.log_Q[: v.N][support]
        log_terms = 2.0 * np.log(mod[support]) - log_Q - 2.0 * np.log(i[support])
        total = _log_sum_exp(log_terms)
        return 0.0 if total == -math.inf else math.exp(0.5 * total)

    if spec.eta >= eta_threshold(eq):
        raise ParameterError(
            f"eta={spec.eta} is not below the admissible limit log(z_s/z)={eta_threshold(eq):.6g}"
        )
    log_terms = spec.eta * i[support] + np.log(mod[support]) - np.log(i[support])
    total = _log_sum_exp(log_terms)
    return 0.0 if total == -math.inf else math.exp(total)


def _log_sum_exp(log_terms: np.ndarray) -> float:
    if log_terms.size == 0:
        return -math.inf
    top = float(log_terms.max())
    total = top + math.log(float(np.sum(np.exp(log_terms - top))))
    if total > 709.0:
        raise SaturationError(f"weighted sum overflows double precision (log value {total:.6g})")
    return total


def weak_form_apply(eq: EquilibriumState, h: StateVector, N: Optional[int] = None) -> StateVector:
    """
    Apply L in h-coordinates through the linearized fluxes.

    j_i = a_i Q_i Q_1 (h_1 + h_i - h_{i+1}) for i < N and j_N = 0; then
    Q_i (Lh)_i = j_{i-1} - j_i for i >= 2 and Q_1 (Lh)_1 = -j_1 - sum_i j_i.
    """
    x = to_h(h)
    N = x.N if N is None else N
    if N != x.N:
        raise CoordinateError(f"state has length {x.N}, expected {N}")
    eq = x.eq
    a, _ = eq.model.rates(N)
    Q = eq.Q[:N]
    vals = x.values
    j = np.zeros(N, dtype=vals.dtype)
    j[:-1] = a[:-1] * Q[:-1] * eq.z * (vals[0] + vals[:-1] - vals[1:])
    out = np.empty_like(j)
    out[1:] = (j[:-1] - j[1:]) / Q[1:]
    out[0] = (-j[0] - _fsum(j)) / Q[0]
    return StateVector(Coords.H, out, eq)
