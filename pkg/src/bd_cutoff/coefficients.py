"""Rate-coefficient families and checks of the standing assumptions."""

import logging

import numpy as np

from .errors import ParameterError
from .models import AssumptionReport, CoefficientModel, ModelKind

logger = logging.getLogger(__name__)


def make_penrose(alpha: float, beta: float, q: float, z_s: float) -> CoefficientModel:
    """
    Build the Penrose family a_i = i^alpha, b_i = a_i (z_s + q / i^(1-beta)).

    Args:
        alpha: Growth exponent, in (0, 1]
        beta: Tail exponent, in [0, 1]
        q: Amplitude of the subleading fragmentation term, > 0
        z_s: Critical monomer density, > 0

    Returns:
        Frozen CoefficientModel
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    if q <= 0:
        raise ParameterError(f"q must be positive, got {q}")
    if z_s <= 0:
        raise ParameterError(f"z_s must be positive, got {z_s}")
    return CoefficientModel(kind=ModelKind.PENROSE, alpha=alpha, beta=beta, q=q, z_s=z_s)


def make_constant(a: float = 1.0, b: float = 1.0) -> CoefficientModel:
    """Constant rates a_i = a, b_i = b (so z_s = b / a)."""
    if a <= 0 or b <= 0:
        raise ParameterError(f"constant rates must be positive, got a={a}, b={b}")
    return CoefficientModel(kind=ModelKind.CONSTANT, a_const=a, b_const=b, z_s=b / a)


def make_custom(
    table: list[tuple[float, float]], z_s: float, beta: float = 0.0
) -> CoefficientModel:
    """
    Build a model from a finite table of (a_i, b_i) pairs.

    Indices past the table are continued by a Penrose-shaped tail whose
    exponent is fitted to the last half of the table.
    """
    if not table:
        raise ParameterError("custom table is empty")
    if any(a <= 0 or b <= 0 for a, b in table):
        raise ParameterError("custom table rates must be positive")
    return CoefficientModel(
        kind=ModelKind.CUSTOM,
        table_a=[float(a) for a, _ in table],
        table_b=[float(b) for _, b in table],
        z_s=z_s,
        beta=beta,
    )


def rate(model: CoefficientModel, i: int) -> tuple[float, float]:
    """Return (a_i, b_i) for a single index i >= 1."""
    if i < 1:
        raise IndexError(f"cluster indices start at 1, got {i}")
    if model.kind == ModelKind.PENROSE:
        a = float(i) ** model.alpha
        return a, a * (model.z_s + model.q / float(i) ** (1.0 - model.beta))
    if model.kind == ModelKind.CONSTANT:
        return model.a_const, model.b_const
    a, b = model.rates(i)
    return float(a[-1]), float(b[-1])


def rates(model: CoefficientModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rates: arrays whose entry k holds a_{k+1}, b_{k+1}."""
    if n < 1:
        raise IndexError(f"need at least one index, got n={n}")
    return model.rates(n)


def check_assumptions(
    model: CoefficientModel,
    N: int,
    tol: float = 0.02,
    growth_tol: float = 0.05,
) -> AssumptionReport:
    """
    Evaluate finite-N surrogates of the standing assumptions.

    The limits a_{i+1}/a_i -> 1 and a_i/b_i -> 1/z_s are checked at the
    tail index N; the o(1) increments are checked as maxima over the last
    N/2 indices. Failures are reported through flags, never raised.

    Args:
        model: Coefficient model
        N: Number of indices to evaluate (>= 16)
        tol: Tolerance for the limit and increment surrogates
        growth_tol: Minimum tail growth exponent for the "a_i unbounded" flag

    Returns:
        AssumptionReport with values and pass/fail flags
    """
    if N < 16:
        raise ParameterError(f"assumption checks need N >= 16, got {N}")
    a, b = model.rates(N)
    i = np.arange(1, N + 1, dtype=float)
    z_s = model.critical_density

    head = slice(0, N // 2)
    tail = slice(N // 2, N)
    growth_head = max((a[head] / i[head]).max(), (b[head] / i[head]).max())
    growth_tail = max((a[tail] / i[tail]).max(), (b[tail] / i[tail]).max())

    max_diff_a = float(np.abs(np.diff(a[N // 2 - 1 :])).max())
    max_diff_b = float(np.abs(np.diff(b[N // 2 - 1 :])).max())
    growth_exponent = float(np.log2(a[-1] / a[N // 2 - 1]))

    report = AssumptionReport(
        N=N,
        tol=tol,
        min_a=float(a.min()),
        max_a_over_i=float((a / i).max()),
        max_b_over_i=float((b / i).max()),
        tail_ratio_a=float(a[-1] / a[-2]),
        tail_a_over_b=float(a[-1] / b[-1]),
        inv_z_s=1.0 / z_s,
        max_diff_a=max_diff_a,
        max_diff_b=max_diff_b,
        growth_exponent=growth_exponent,
    )
    report.flags = {
        "a_lower_bound": report.min_a > 0,
        "a_ratio_limit": abs(report.tail_ratio_a - 1.0) <= tol,
        "z_s_limit": abs(report.tail_a_over_b * z_s - 1.0) <= tol,
        "linear_growth": bool(growth_tail <= growth_head),
        "a_diff_small": max_diff_a <= tol,
        "b_diff_small": max_diff_b <= tol,
        "a_unbounded": growth_exponent > growth_tol,
    }
    failed = [k for k, ok in report.flags.items() if not ok]
    if failed:
        logger.info("assumption surrogates failing at N=%d: %s", N, ", ".join(failed))
    return report
