"""Data models for the Becker-Doring laboratory."""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Range over which the lower-bound and linear-growth witnesses C1, C2 are taken.
WITNESS_N = 4096


class ModelKind(str, Enum):
    """Family of rate coefficients."""

    PENROSE = "penrose"
    CONSTANT = "constant"
    CUSTOM = "custom-table"


class CoefficientModel(BaseModel):
    """Aggregation rates (a_i) and fragmentation rates (b_i).

    Penrose models use the closed forms ``a_i = i**alpha`` and
    ``b_i = a_i * (z_s + q / i**(1 - beta))``. Constant models use
    ``a_i = a_const``, ``b_i = b_const``. Custom tables are used as given
    and continued past their end by a Penrose-shaped tail whose exponent is
    fitted to the last half of the table.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ModelKind = Field(default=ModelKind.PENROSE, description="Coefficient family")
    alpha: float = Field(default=0.5, description="Growth exponent of a_i")
    beta: float = Field(default=0.0, ge=0.0, le=1.0, description="Decay exponent of b_i/a_i - z_s")
    q: float = Field(default=1.0, gt=0.0, description="Amplitude of b_i/a_i - z_s")
    z_s: float = Field(default=1.0, gt=0.0, description="Critical monomer density")
    a_const: float = Field(default=1.0, gt=0.0, description="a_i for the constant family")
    b_const: float = Field(default=1.0, gt=0.0, description="b_i for the constant family")
    table_a: Optional[list[float]] = Field(default=None, description="a_1..a_n of a custom table")
    table_b: Optional[list[float]] = Field(default=None, description="b_1..b_n of a custom table")

    @model_validator(mode="after")
    def _check_family(self) -> "CoefficientModel":
        if self.kind == ModelKind.PENROSE and not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1] for penrose models, got {self.alpha}")
        if self.kind == ModelKind.CUSTOM:
            if not self.table_a or not self.table_b:
                raise ValueError("custom-table models need non-empty table_a and table_b")
            if len(self.table_a) != len(self.table_b):
                raise ValueError(
                    f"table_a has {len(self.table_a)} entries but table_b has {len(self.table_b)}"
                )
            if min(self.table_a) <= 0 or min(self.table_b) <= 0:
                raise ValueError("custom-table rates must be positive")
        return self

    @property
    def critical_density(self) -> float:
        """Operational z_s = lim b_i / a_i."""
        if self.kind == ModelKind.CONSTANT:
            return self.b_const / self.a_const
        return self.z_s

    def _tail_fit(self) -> tuple[float, float]:
        """Fitted (alpha, q) used past the end of a custom table."""
        a = np.asarray(self.table_a, dtype=float)
        b = np.asarray(self.table_b, dtype=float)
        n = len(a)
        if n >= 4:
            idx = np.arange(n // 2 + 1, n + 1, dtype=float)
            alpha = float(np.polyfit(np.log(idx), np.log(a[n // 2 :]), 1)[0])
        else:
            alpha = 0.0
        q = (b[-1] / a[-1] - self.z_s) * n ** (1.0 - self.beta)
        return alpha, q

    def rates(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Return arrays (a_1..a_n, b_1..b_n); entry k holds index k + 1."""
        i = np.arange(1, n + 1, dtype=float)
        if self.kind == ModelKind.PENROSE:
            a = i**self.alpha
            b = a * (self.z_s + self.q / i ** (1.0 - self.beta))
        elif self.kind == ModelKind.CONSTANT:
            a = np.full(n, self.a_const)
            b = np.full(n, self.b_const)
        else:
            table_a = np.asarray(self.table_a, dtype=float)
            table_b = np.asarray(self.table_b, dtype=float)
            m = len(table_a)
            a = np.empty(n)
            b = np.empty(n)
            k = min(n, m)
            a[:k] = table_a[:k]
            b[:k] = table_b[:k]
            if n > m:
                alpha, q = self._tail_fit()
                tail = i[m:]
                a[m:] = table_a[-1] * (tail / m) ** alpha
                b[m:] = a[m:] * (self.z_s + q / tail ** (1.0 - self.beta))
        return a, b

    @property
    def C1(self) -> float:
        """Lower-bound witness min a_i over the witness range."""
        a, _ = self.rates(WITNESS_N)
        return float(a.min())

    @property
    def C2(self) -> float:
        """Linear-growth witness max(a_i/i, b_i/i) over the witness range."""
        a, b = self.rates(WITNESS_N)
        i = np.arange(1, WITNESS_N + 1, dtype=float)
        return float(max((a / i).max(), (b / i).max()))


class AssumptionReport(BaseModel):
    """Finite-N surrogates of the standing coefficient assumptions."""

    N: int
    tol: float = Field(description="Tolerance used for the limit surrogates")
    min_a: float = Field(description="min a_i, the lower-bound witness C1")
    max_a_over_i: float
    max_b_over_i: float
    tail_ratio_a: float = Field(description="a_N / a_{N-1}")
    tail_a_over_b: float = Field(description="a_N / b_N")
    inv_z_s: float = Field(description="1 / z_s")
    max_diff_a: float = Field(description="max |a_i - a_{i-1}| over the last N/2 indices")
    max_diff_b: float = Field(description="max |b_i - b_{i-1}| over the last N/2 indices")
    growth_exponent: float = Field(description="log2(a_N / a_{N/2})")
    flags: dict[str, bool] = Field(default_factory=dict)

    @property
    def standing_assumptions_hold(self) -> bool:
        """The four standing assumptions all passed."""
        keys = ("a_lower_bound", "a_ratio_limit", "z_s_limit", "linear_growth")
        return all(self.flags.get(k, False) for k in keys)


class NormFamily(str, Enum):
    """Norm families used on perturbations."""

    XK = "Xk"
    L2Q = "l2Q"
    YETA = "Yeta"


class NormSpec(BaseModel):
    """A norm on perturbations h (evaluated from mass-weighted values)."""

    model_config = ConfigDict(frozen=True)

    family: NormFamily = NormFamily.XK
    k: float = Field(default=1.0, ge=1.0, description="Polynomial weight index for Xk")
    eta: float = Field(default=0.0, ge=0.0, description="Exponential rate for Yeta")

    @classmethod
    def x(cls, k: float = 1.0) -> "NormSpec":
        return cls(family=NormFamily.XK, k=k)

    @classmethod
    def l2q(cls) -> "NormSpec":
        return cls(family=NormFamily.L2Q)

    @classmethod
    def y(cls, eta: float) -> "NormSpec":
        return cls(family=NormFamily.YETA, eta=eta)


class Certificate(BaseModel):
    """Resolvent lower bound obtained from a quasimode residual."""

    lam: float = Field(description="Spectral parameter; the certified point is lam * 1j")
    k: float
    N1: int
    N2: int
    residual: float
    bound: float = Field(description="Lower bound 1/residual for the resolvent norm")
    exact: bool = Field(default=False, description="True for the exact kernel vector")


class Table(BaseModel):
    """A rectangular numeric table destined for CSV."""

    name: str
    columns: list[str]
    rows: list[list[float]] = Field(default_factory=list)

    def column(self, name: str) -> list[float]:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]


class CutoffReport(BaseModel):
    """Half-life scaling of the two-pulse perturbations."""

    alpha: float
    N_values: list[int]
    T_half: list[Optional[float]] = Field(description="None marks a censored data point")
    t_eps: list[Optional[float]]
    delta_hat: Optional[float] = Field(
        default=None, description="min over N of (last time with norm >= 1 - eps) / N^(1-alpha)"
    )
    fitted_exponent: Optional[float] = None
    fitted_prefactor: Optional[float] = None
    censored: list[int] = Field(default_factory=list)
    tables: list[Table] = Field(default_factory=list)
    flags: dict[str, bool] = Field(default_factory=dict)


class ExperimentReport(BaseModel):
    """Serializable outcome of a single harness run."""

    command: str
    config: dict = Field(default_factory=dict, description="Echo of the normalized config")
    config_hash: str = ""
    summary: dict = Field(default_factory=dict)
    tables: list[Table] = Field(default_factory=list)
    table_paths: dict[str, str] = Field(default_factory=dict)
    flags: dict[str, bool] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """Every acceptance flag is true."""
        return all(self.flags.values())

    def flag(self, name: str, value: bool) -> None:
        self.flags[name] = bool(value)


class LinearizationReport(BaseModel):
    """Gap between the rescaled nonlinear flow and the linear flow."""

    T: float
    N: int
    eps: list[float]
    gaps: list[float] = Field(description="X_1 gap between (c - Q)/eps and the linear flow at T")
    ratios: list[float] = Field(description="gap(eps[k]) / gap(eps[k+1])")
    linear_mass: float = Field(description="mu of the linear flow at T")
    nonlinear_mass_drift: list[float] = Field(
        description="|sum i c_i(T) - sum i c_i(0)| for each eps"
    )


class SupersolutionReport(BaseModel):
    """Minimum of dW/dt - (LW) over a time grid."""

    which: str
    D: float
    N_ref: int
    min_residual: float
    argmin_index: int = Field(description="Cluster index where the minimum is attained")
    argmin_time: float
    negative_region: Optional[tuple[int, int]] = Field(
        default=None, description="Smallest and largest index with residual below -tol"
    )
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.min_residual >= -self.tol


class MinimumPrincipleReport(BaseModel):
    """Extrema of an integrated-operator flow, interior vs parabolic boundary."""

    T: float
    N: int
    min_interior: float
    min_boundary: float
    max_interior: float
    max_boundary: float
    slack: float
    passed_min: bool
    passed_max: bool

    @property
    def passed(self) -> bool:
        return self.passed_min and self.passed_max


class ComparisonReport(BaseModel):
    """Largest violations of V <= W1 and 1 - V <= W2 over the sampled times."""

    D: float
    max_excess_W1: float
    max_excess_W2: float
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.max_excess_W1 <= self.tol and self.max_excess_W2 <= self.tol


class UpperDecayReport(BaseModel):
    """Time to drop below eps and the late-time exponential rate."""

    eta: float
    eps: float
    N_values: list[int]
    t_eps: list[Optional[float]]
    growth_ratios: list[float] = Field(description="t_eps(N_{k+1}) / t_eps(N_k)")
    t_eps_over_N: list[Optional[float]]
    decay_rates: list[Optional[float]] = Field(description="Fitted late-time rate per N")
    initial_Yeta: list[float]
    flags: dict[str, bool] = Field(default_factory=dict)
