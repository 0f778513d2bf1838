"""Run configuration: validated blocks merged from a JSON file and command-line flags."""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .models import CoefficientModel, NormSpec
from .spectral import DEFAULT_LAMBDA_GRID, DEFAULT_N1_SCHEDULE

TRUNCATION_FACTOR = 4


class Command(str, Enum):
    """Harness subcommands."""

    EQUILIBRIUM = "equilibrium"
    EVOLVE = "evolve"
    SPECTRUM = "spectrum"
    PULSE = "pulse"
    CUTOFF = "cutoff"
    CHECK_ASSUMPTIONS = "check-assumptions"


class EquilibriumBlock(BaseModel):
    """Either the mass or the monomer density of the equilibrium."""

    model_config = ConfigDict(extra="forbid")

    mu: Optional[float] = Field(default=None, gt=0.0, description="Equilibrium mass")
    z: Optional[float] = Field(default=None, gt=0.0, description="Monomer density")
    tol: float = Field(default=1e-10, gt=0.0, description="Absolute tolerance on the mass")

    @model_validator(mode="after")
    def _one_of(self) -> "EquilibriumBlock":
        if (self.mu is None) == (self.z is None):
            raise ValueError(
                f"exactly one of equilibrium.mu / equilibrium.z is required, "
                f"got mu={self.mu}, z={self.z}"
            )
        return self


class ExperimentBlock(BaseModel):
    """Parameters of every subcommand; each reads the fields it needs."""

    model_config = ConfigDict(extra="forbid")

    N: int = Field(default=1024, ge=16, description="Truncation for equilibrium/assumption checks")
    T: Optional[float] = Field(default=None, gt=0.0, description="Final time")
    n_samples: int = Field(default=200, ge=1, description="Sampling intervals on [0, T]")
    eps: float = Field(default=0.1, gt=0.0, lt=1.0)
    N1: int = Field(default=512, ge=2, description="Pulse start")
    N2: Optional[int] = Field(default=None, description="Pulse end (default 2 N1)")
    K_star: Optional[float] = Field(default=None, gt=0.0)
    N_list: list[int] = Field(default_factory=lambda: [256, 512, 1024, 2048])
    eta: float = Field(default=0.02, ge=0.0)
    upper_decay: bool = Field(default=True, description="Also run the upper-regime check")
    lambda_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    N1_schedule: list[int] = Field(default_factory=lambda: list(DEFAULT_N1_SCHEDULE))
    k: float = Field(default=1.0, ge=1.0)
    mass_correct: bool = False
    operator: Literal["full", "tilde"] = "full"
    norms: list[str] = Field(default_factory=lambda: ["X1"], description="X<k>, l2Q or Yeta")

    @model_validator(mode="after")
    def _check(self) -> "ExperimentBlock":
        if self.N2 is not None and self.N2 <= self.N1 + 1:
            raise ValueError(f"experiment.N2={self.N2} must exceed experiment.N1+1={self.N1 + 1}")
        bad = [n for n in self.N_list if n < 4 or n % 4]
        if not self.N_list or bad:
            raise ValueError(f"experiment.N_list needs positive multiples of 4, got {self.N_list}")
        for name in self.norms:
            parse_norm(name, self.eta)
        return self

    @property
    def pulse_end(self) -> int:
        return 2 * self.N1 if self.N2 is None else self.N2


class NumericsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N_trunc: Optional[int] = Field(default=None, ge=4, description="Truncation size")
    rtol: float = Field(default=1e-8, gt=0.0, lt=1.0)
    scheme: Literal["explicit", "implicit"] = "explicit"
    dt: Optional[float] = Field(default=None, gt=0.0, description="Implicit step size")


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = Field(default="out", description="Output directory")
    csv: bool = True
    snapshots: bool = Field(default=False, description="Write the final state as i, v_i")


class RunConfig(BaseModel):
    """Complete, validated configuration of one harness run."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    model: CoefficientModel = Field(default_factory=CoefficientModel)
    equilibrium: Optional[EquilibriumBlock] = None
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    numerics: NumericsBlock = Field(default_factory=NumericsBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, description="Recorded only; no randomized algorithms")

    def largest_index(self) -> Optional[int]:
        """Largest index the experiment touches, None when the truncation is internal."""
        if self.command in (Command.PULSE, Command.EVOLVE):
            return self.experiment.pulse_end
        if self.command == Command.CUTOFF:
            return max(self.experiment.N_list)
        return None

    @model_validator(mode="after")
    def _check_truncation(self) -> "RunConfig":
        if self.equilibrium is None and self.command != Command.CHECK_ASSUMPTIONS:
            raise ValueError(
                f"command {self.command.value!r} needs an equilibrium block with mu or z"
            )
        largest = self.largest_index()
        N_trunc = self.numerics.N_trunc
        if largest is not None and N_trunc is not None:
            if N_trunc < TRUNCATION_FACTOR * largest:
                raise ValueError(
                    f"numerics.N_trunc={N_trunc} is below {TRUNCATION_FACTOR} x {largest} "
                    f"= {TRUNCATION_FACTOR * largest}"
                )
        return self

    @property
    def truncation(self) -> int:
        """N_trunc, or 4 x the largest index (experiment.N when there is none)."""
        if self.numerics.N_trunc is not None:
            return self.numerics.N_trunc
        largest = self.largest_index()
        return self.experiment.N if largest is None else TRUNCATION_FACTOR * largest

    def normalized(self) -> dict:
        """Config echo used for hashing; output paths and thread counts excluded."""
        return self.model_dump(mode="json", exclude={"output", "threads"})


def parse_norm(name: str, eta: float = 0.0) -> NormSpec:
    """'X1', 'X2.5', 'l2Q' or 'Yeta' to a NormSpec."""
    if name == "l2Q":
        return NormSpec.l2q()
    if name == "Yeta":
        return NormSpec.y(eta)
    if name.startswith("X"):
        try:
            return NormSpec.x(float(name[1:]))
        except ValueError:
            pass
    raise ValueError(f"unknown norm {name!r}; expected X<k>, l2Q or Yeta")


def merge(base: dict, overrides: dict) -> dict:
    """Recursive merge; override values win field by field."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def parse_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> RunConfig:
    """
    Build a RunConfig from an optional JSON file and flag overrides.

    A mu given as an override replaces a z from the file and vice versa;
    every other override replaces the file value of the same field.

    Raises:
        ConfigError: missing file, bad JSON, unknown field or violated constraint
    """
    data = load_config_file(path) if path is not None else {}
    overrides = overrides or {}
    equilibrium_flags = overrides.get("equilibrium", {})
    if "mu" in equilibrium_flags or "z" in equilibrium_flags:
        file_block = dict(data.get("equilibrium", {}))
        file_block.pop("mu", None)
        file_block.pop("z", None)
        data = {**data, "equilibrium": file_block}
    try:
        return RunConfig.model_validate(merge(data, overrides))
    except ValidationError as e:
        raise ConfigError(str(e)) from e
