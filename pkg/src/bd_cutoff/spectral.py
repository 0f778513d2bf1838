"""Quasimodes on the imaginary axis and resolvent lower-bound certificates."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .equilibrium import EquilibriumState
from .errors import ParameterError, TruncationError
from .models import Certificate, CoefficientModel, NormSpec, Table
from .operators import (
    Coords,
    OperatorMatrix,
    StateVector,
    assemble_full,
    matvec,
    norm,
    to_h,
    zero_mode,
)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.0, -0.5, 0.5, -1.0, 1.0, -2.0, 2.0, -5.0, 5.0)
DEFAULT_N1_SCHEDULE = (64, 128, 256, 512, 1024, 2048, 4096)
SPECTRUM_COLUMNS = ["lambda", "N1", "N2", "k", "residual", "bound"]


@dataclass(frozen=True, eq=False)
class Quasimode:
    """Unit-modulus phased pulse, stored in v-form (v_i = i Q_i h_i)."""

    lam: float
    N1: int
    N2: int
    k: float
    values: StateVector = field(repr=False)
    mass_corrected: bool = False
    second_window: Optional[tuple[int, int]] = None

    @property
    def N(self) -> int:
        return self.values.N

    def h_form(self) -> StateVector:
        """h-values; only available while the windows lie before the Q underflow point."""
        return to_h(self.values)


def _phases(model: CoefficientModel, drift: float, lam: float, lo: int, hi: int) -> np.ndarray:
    """exp(i lam / drift * sum_{j=lo}^{i} 1/a_j) for i = lo..hi, summed left to right."""
    a, _ = model.rates(hi)
    running = np.cumsum(1.0 / a[lo - 1 : hi])
    return np.exp(1j * (lam / drift) * running)


def build_quasimode(
    model: CoefficientModel,
    eq: EquilibriumState,
    lam: float,
    N1: int,
    N2: int,
    k: float = 1.0,
    mass_correct: bool = False,
    N: Optional[int] = None,
    second_window: Optional[tuple[int, int]] = None,
) -> Quasimode:
    """
    Build the phased pulse on [N1, N2].

    Args:
        model: Coefficient model
        eq: Equilibrium
        lam: Spectral parameter; the target point is lam * 1j
        N1, N2: Pulse window, 2 <= N1 < N2
        k: Norm index the quasimode is measured in
        mass_correct: Add a scaled partner pulse so the total mass vanishes
        N: Truncation (default twice the last window index)
        second_window: Partner window (default [4 N2, 8 N2])

    Raises:
        ParameterError: bad or overlapping windows
        TruncationError: a window reaches past N / 2
    """
    if not 2 <= N1 < N2:
        raise ParameterError(f"need 2 <= N1 < N2, got N1={N1}, N2={N2}")
    if mass_correct and second_window is None:
        second_window = (4 * N2, 8 * N2)
    last = N2
    if mass_correct:
        lo2, hi2 = second_window
        if not lo2 < hi2:
            raise ParameterError(f"empty partner window {second_window}")
        if lo2 <= N2 and hi2 >= N1:
            raise ParameterError(f"partner window {second_window} overlaps [{N1}, {N2}]")
        last = max(N2, hi2)
    N = 2 * last if N is None else N
    if 2 * last > N:
        raise TruncationError(f"window end {last} exceeds N/2 with N={N}")

    eq = eq.extend(N)
    drift = eq.drift
    v = np.zeros(N, dtype=complex)
    v[N1 - 1 : N2] = _phases(model, drift, lam, N1, N2)
    if mass_correct:
        lo2, hi2 = second_window
        partner = _phases(model, drift, lam, lo2, hi2)
        mass1 = complex(math.fsum(v.real), math.fsum(v.imag))
        mass2 = complex(math.fsum(partner.real), math.fsum(partner.imag))
        if abs(mass2) < 1e-12 * (hi2 - lo2 + 1):
            raise ParameterError(f"partner pulse on {second_window} carries no mass at lam={lam}")
        v[lo2 - 1 : hi2] = -(mass1 / mass2) * partner
    return Quasimode(
        lam=lam,
        N1=N1,
        N2=N2,
        k=k,
        values=StateVector(Coords.V, v, eq),
        mass_corrected=mass_correct,
        second_window=second_window if mass_correct else None,
    )


def _weighted_l1(values: np.ndarray, k: float) -> float:
    i = np.arange(1, values.size + 1, dtype=float)
    weights = 1.0 if k == 1.0 else i ** (k - 1.0)
    return float(np.sum(weights * np.abs(values)))


def residual_ratio(
    model: CoefficientModel,
    eq: EquilibriumState,
    q: Quasimode,
    op: Optional[OperatorMatrix] = None,
) -> float:
    """
    r = sum i^(k-1) |(Lv - lam i v)_i| / sum i^(k-1) |v_i|.

    Every row is included, row 1's dense sum among them.
    """
    op = assemble_full(model, eq, q.N) if op is None else op
    if op.N != q.N:
        raise TruncationError(f"operator N={op.N} does not match quasimode N={q.N}")
    v = q.values.values
    denominator = _weighted_l1(v, q.k)
    if denominator == 0:
        raise ParameterError("quasimode is identically zero")
    return _weighted_l1(matvec(op, v) - 1j * q.lam * v, q.k) / denominator


def resolvent_certificate(q: Quasimode, r: float) -> Certificate:
    """Record ||(L - lam i)^-1|| >= 1/r for the truncated operator."""
    if not r > 0:
        raise ParameterError(f"certificate needs a positive residual, got {r}")
    return Certificate(lam=q.lam, k=q.k, N1=q.N1, N2=q.N2, residual=r, bound=1.0 / r)


def kernel_certificate(
    model: CoefficientModel, eq: EquilibriumState, N: int, k: float = 1.0
) -> Certificate:
    """Residual of the exact kernel vector at lam = 0, flagged exact."""
    xi = zero_mode(eq, N)
    op = assemble_full(model, eq, N)
    r = _weighted_l1(matvec(op, xi.values), k) / _weighted_l1(xi.values, k)
    bound = 1.0 / r if r > 0 else math.inf
    return Certificate(lam=0.0, k=k, N1=1, N2=N, residual=r, bound=bound, exact=True)


def spectrum_scan(
    model: CoefficientModel,
    eq: EquilibriumState,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    N1_schedule: Sequence[int] = DEFAULT_N1_SCHEDULE,
    k: float = 1.0,
    mass_correct: bool = False,
    threads: int = 1,
) -> Table:
    """
    Residual ratios over lambda x N1 cells, N2 = 2 N1.

    Rows are ordered lambda-major in grid order regardless of thread count.
    """
    if not lambda_grid or not N1_schedule:
        raise ParameterError("lambda grid and N1 schedule must be nonempty")
    cells = [(float(lam), int(n1)) for lam in lambda_grid for n1 in N1_schedule]
    operators: dict[int, OperatorMatrix] = {}

    def truncation(n1: int) -> int:
        return 16 * n1 * 2 if mass_correct else 4 * n1

    for n1 in sorted(set(n for _, n in cells)):
        operators[n1] = assemble_full(model, eq, truncation(n1))

    def run_cell(cell: tuple[float, int]) -> list[float]:
        lam, n1 = cell
        q = build_quasimode(
            model, eq, lam, n1, 2 * n1, k, mass_correct=mass_correct, N=truncation(n1)
        )
        r = residual_ratio(model, eq, q, op=operators[n1])
        bound = 1.0 / r if r > 0 else math.inf
        return [lam, float(n1), float(2 * n1), k, r, bound]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]
    logger.info("spectrum scan: %d cells", len(rows))
    return Table(name="spectrum", columns=SPECTRUM_COLUMNS, rows=rows)


@dataclass(frozen=True)
class WindowConstants:
    """Measured and integral-comparison constants for sum_{N1}^{2 N1} i^(k-1)."""

    k: float
    c1: float
    c2: float
    ratio_min: float
    ratio_max: float
    ratios: tuple[float, ...]


def measure_window_constants(N1_values: Sequence[int], k: float = 1.0) -> WindowConstants:
    """
    Ratios sum_{i=N1}^{2 N1} i^(k-1) / N1^k and the bounds c1 < ratio <= c2.

    c1 = (2^k - 1)/k from the integral over [N1, 2 N1]; c2 = ((2 + 1/N1_min)^k - 1)/k
    from the integral over [N1, 2 N1 + 1].
    """
    if not N1_values:
        raise ParameterError("need at least one N1")
    ratios = []
    for n1 in N1_values:
        i = np.arange(n1, 2 * n1 + 1, dtype=float)
        ratios.append(math.fsum(i ** (k - 1.0)) / float(n1) ** k)
    n_min = min(N1_values)
    return WindowConstants(
        k=k,
        c1=(2.0**k - 1.0) / k,
        c2=((2.0 + 1.0 / n_min) ** k - 1.0) / k,
        ratio_min=min(ratios),
        ratio_max=max(ratios),
        ratios=tuple(ratios),
    )


def quasimode_norm(q: Quasimode) -> float:
    """X_k size of the quasimode."""
    return norm(NormSpec.x(q.k), q.values.eq, q.values)
