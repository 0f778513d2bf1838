"""Assembly and application of the truncated mass-weighted operators.

Every operator is stored as a tridiagonal core plus, for the full operator,
the dense extras of row 1 and the coupling of rows 3..N to v_1. Entry k of
each array refers to index k + 1; ``lower[k]`` couples row k + 2 to column
k + 1 and ``upper[k]`` couples row k + 1 to column k + 2.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..equilibrium import EquilibriumState
from ..errors import CoordinateError, TruncationError
from ..models import CoefficientModel
from .state import Coords, StateVector

logger = logging.getLogger(__name__)

MIN_N = 4


class OperatorKind(str, Enum):
    """Which operator a matrix represents."""

    FULL = "full-L"
    TILDE = "tilde-L"
    INTEGRATED = "integrated-L"
    DIFFERENCE = "difference"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Truncated operator with zero-flux closure at row N."""

    kind: OperatorKind
    N: int
    diag: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    first_col: np.ndarray = field(repr=False)
    first_row: np.ndarray = field(repr=False)
    equilibrium: EquilibriumState = field(repr=False)
    rate_scale: float = 0.0

    @property
    def model(self) -> CoefficientModel:
        return self.equilibrium.model

    @property
    def has_arrow(self) -> bool:
        return self.kind in (OperatorKind.FULL, OperatorKind.DIFFERENCE)

    @property
    def input_coords(self) -> Coords:
        return Coords.PREFIX if self.kind == OperatorKind.INTEGRATED else Coords.V

    def tridiagonal_bands(self) -> np.ndarray:
        """The tridiagonal core in scipy.linalg.solve_banded (1, 1) layout."""
        bands = np.zeros((3, self.N))
        bands[0, 1:] = self.upper
        bands[1] = self.diag
        bands[2, :-1] = self.lower
        return bands


def _setup(model: CoefficientModel, eq: EquilibriumState, N: int):
    if N < MIN_N:
        raise TruncationError(f"operators need N >= {MIN_N}, got {N}")
    eq = eq.extend(N)
    a, b = model.rates(N)
    i = np.arange(1, N + 1, dtype=float)
    return eq, a, b, eq.Q[:N], eq.z, i


def _rate_scale(a: np.ndarray, b: np.ndarray, z: float) -> float:
    """rho = max_i (a_i Q_1 + b_i), the explicit step-size scale."""
    return float((a * z + b).max())


def assemble_tilde(model: CoefficientModel, eq: EquilibriumState, N: int) -> OperatorMatrix:
    """
    Assemble the tridiagonal comparison operator.

    (Lv)_i = a_{i-1}Q_1 v_{i-1} - a_iQ_1 v_i + b_{i+1} i/(i+1) v_{i+1} - b_i (i-1)/i v_i,
    with the outflow and inflow terms removed at row N.
    """
    eq, a, b, _, z, i = _setup(model, eq, N)
    outflow = a * z
    outflow[-1] = 0.0
    diag = -outflow - b * (i - 1.0) / i
    lower = a[:-1] * z
    upper = b[1:] * i[:-1] / i[1:]
    zeros = np.zeros(N)
    return OperatorMatrix(
        kind=OperatorKind.TILDE,
        N=N,
        diag=diag,
        lower=lower,
        upper=upper,
        first_col=zeros,
        first_row=zeros.copy(),
        equilibrium=eq,
        rate_scale=_rate_scale(a, b, z),
    )


def assemble_full(model: CoefficientModel, eq: EquilibriumState, N: int) -> OperatorMatrix:
    """
    Assemble the linearized operator in v-coordinates.

    Rows i >= 2:
        i(a_{i-1}Q_{i-1} - a_iQ_i) v_1 + (-a_iQ_1 - b_i) v_i
        + a_{i-1}Q_1 i/(i-1) v_{i-1} + b_{i+1} i/(i+1) v_{i+1}
    Row 1:
        -2a_1Q_1 v_1 + b_2/2 v_2
        + sum_{j<N} (b_{j+1}/(j+1) v_{j+1} - a_jQ_1/j v_j - a_jQ_j v_1)

    Terms that carry flux across N are removed, so sum_i (Lv)_i = 0 and
    v_i = i^2 Q_i is an exact kernel vector at every N.
    """
    eq, a, b, Q, z, i = _setup(model, eq, N)
    flux = a * Q  # a_j Q_j
    flux_in = flux.copy()
    flux_in[-1] = 0.0  # no a_N Q_N term at the truncation row
    outflow = a * z
    outflow[-1] = 0.0

    diag = -outflow - b
    diag[0] = -3.0 * a[0] * z - math.fsum(flux[:-1])

    lower = a[:-1] * z * i[1:] / i[:-1]
    lower[0] += 2.0 * (flux[0] - flux_in[1])

    upper = b[1:] * i[:-1] / i[1:]
    upper[0] = b[1] - a[1] * z / 2.0

    first_col = np.zeros(N)
    first_col[2:] = i[2:] * (flux[1:-1] - flux_in[2:])

    first_row = np.zeros(N)
    first_row[2:] = (b[2:] - outflow[2:]) / i[2:]

    return OperatorMatrix(
        kind=OperatorKind.FULL,
        N=N,
        diag=diag,
        lower=lower,
        upper=upper,
        first_col=first_col,
        first_row=first_row,
        equilibrium=eq,
        rate_scale=_rate_scale(a, b, z),
    )


def assemble_integrated(model: CoefficientModel, eq: EquilibriumState, N: int) -> OperatorMatrix:
    """
    Assemble the operator acting on prefix sums.

    (LV)_i = -a_iQ_1 (V_i - V_{i-1}) + b_{i+1} (V_{i+1} - V_i) i/(i+1), V_0 = 0 and
    V_{N+1} = V_N.
    """
    eq, a, b, _, z, i = _setup(model, eq, N)
    forward = np.zeros(N)
    forward[:-1] = b[1:] * i[:-1] / i[1:]
    diag = -a * z - forward
    lower = a[1:] * z
    upper = forward[:-1].copy()
    zeros = np.zeros(N)
    return OperatorMatrix(
        kind=OperatorKind.INTEGRATED,
        N=N,
        diag=diag,
        lower=lower,
        upper=upper,
        first_col=zeros,
        first_row=zeros.copy(),
        equilibrium=eq,
        rate_scale=_rate_scale(a, b, z),
    )


def difference_operator(full: OperatorMatrix, tilde: OperatorMatrix) -> OperatorMatrix:
    """full - tilde, stored in the same layout (the forcing of the Duhamel formula)."""
    if full.kind != OperatorKind.FULL or tilde.kind != OperatorKind.TILDE:
        raise CoordinateError(
            f"difference needs (full-L, tilde-L), got ({full.kind.value}, {tilde.kind.value})"
        )
    if full.N != tilde.N:
        raise TruncationError(f"truncations differ: {full.N} vs {tilde.N}")
    return OperatorMatrix(
        kind=OperatorKind.DIFFERENCE,
        N=full.N,
        diag=full.diag - tilde.diag,
        lower=full.lower - tilde.lower,
        upper=full.upper - tilde.upper,
        first_col=full.first_col - tilde.first_col,
        first_row=full.first_row - tilde.first_row,
        equilibrium=full.equilibrium,
        rate_scale=full.rate_scale,
    )


def matvec(op: OperatorMatrix, values: np.ndarray) -> np.ndarray:
    """O(N) product with a raw real or complex array."""
    if np.iscomplexobj(values):
        return matvec(op, values.real) + 1j * matvec(op, values.imag)
    y = op.diag * values
    y[1:] += op.lower * values[:-1]
    y[:-1] += op.upper * values[1:]
    if op.has_arrow:
        y += op.first_col * values[0]
        y[0] += math.fsum(op.first_row[2:] * values[2:])
    return y


def apply(op: OperatorMatrix, x: StateVector) -> StateVector:
    """
    Apply the operator to a state in its expected coordinates.

    Raises:
        CoordinateError: wrong coordinate form or length
    """
    if x.coords != op.input_coords:
        raise CoordinateError(
            f"{op.kind.value} acts on {op.input_coords.value}-form, got {x.coords.value}-form"
        )
    if x.N != op.N:
        raise CoordinateError(f"state has length {x.N}, operator has N={op.N}")
    return x.with_values(matvec(op, x.values))


def integrated_apply(model: CoefficientModel, eq: EquilibriumState, V: StateVector) -> StateVector:
    """Apply the prefix-sum operator to V-form data."""
    if V.coords != Coords.PREFIX:
        raise CoordinateError(f"integrated operator acts on V-form, got {V.coords.value}-form")
    return apply(assemble_integrated(model, eq, V.N), V)


def to_dense(op: OperatorMatrix) -> np.ndarray:
    """Expand the structured storage to a dense N x N matrix."""
    M = np.diag(op.diag) + np.diag(op.lower, -1) + np.diag(op.upper, 1)
    if op.has_arrow:
        M[:, 0] += op.first_col
        M[0, 2:] += op.first_row[2:]
    return M
