"""Experiment configuration: a TOML file checked against a strict schema.

Unknown keys are rejected and every violation is reported at once, each
with its dotted key path.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .noise import parse_seed

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_N_REF = 2048
DEFAULT_R = 64
DEFAULT_N_GRID = (8, 16, 32, 64, 128)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


PosFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
NonNegFloat = Annotated[float, Field(ge=0, allow_inf_nan=False)]


class _Constants(_Strict):
    # optional overrides of the auto-derived regularity constants
    K: Optional[NonNegFloat] = None
    K0: Optional[NonNegFloat] = None
    beta: Optional[NonNegFloat] = None
    gamma_star: Optional[NonNegFloat] = None


class SystemicRiskSection(_Constants):
    name: Literal["systemic_risk"]
    a: NonNegFloat = 1.0
    vol: NonNegFloat = 1.0
    jump_scale: float = 0.5
    lambda0: NonNegFloat = 1.0
    lambda1: NonNegFloat = 1.0
    lambda_bar: PosFloat = 5.0
    x0_mean: float = 0.0
    x0_std: NonNegFloat = 1.0


class ZeroSection(_Constants):
    name: Literal["zero"]
    x0_std: NonNegFloat = 1.0


class RegimeSection(_Constants):
    name: Literal["regime_switching"]
    states: list[float] = Field(default_factory=lambda: [1.0, 2.0], min_length=1)
    rates: list[list[NonNegFloat]] = Field(default_factory=lambda: [[0.0, 1.0], [2.0, 0.0]])
    H0: Optional[PosFloat] = None
    drifts: Optional[list[float]] = None
    vol: NonNegFloat = 0.0
    y0: int = Field(0, ge=0)
    x0_std: NonNegFloat = 0.0

    @model_validator(mode="after")
    def _shapes(self):
        S = len(self.states)
        if len(self.rates) != S or any(len(row) != S for row in self.rates):
            raise ValueError(f"rates must be a {S}x{S} matrix")
        if self.drifts is not None and len(self.drifts) != S:
            raise ValueError("drifts needs one value per state")
        if self.y0 >= S:
            raise ValueError("y0 must index a state")
        return self


ModelSection = Annotated[
    Union[SystemicRiskSection, ZeroSection, RegimeSection],
    Field(discriminator="name"),
]


class SimSection(_Strict):
    T: PosFloat = 1.0
    dt: Optional[PosFloat] = None
    dt_noise: Optional[PosFloat] = None
    n: int = Field(16, ge=1)
    n_grid: list[Annotated[int, Field(ge=1)]] = Field(default_factory=lambda: list(DEFAULT_N_GRID))
    N_ref: int = Field(DEFAULT_N_REF, ge=1)
    R: int = Field(DEFAULT_R, ge=1)
    d: int = Field(1, ge=1)
    index_set: Optional[list[Annotated[int, Field(ge=0)]]] = None
    common_init: bool = False

    @model_validator(mode="after")
    def _fill(self):
        if self.dt is None:
            self.dt = self.T / 1000
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        if self.dt_noise is not None and self.dt_noise > self.dt:
            raise ValueError("dt_noise must not exceed dt")
        if any(b <= a for a, b in zip(self.n_grid[:-1], self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if self.index_set is not None and any(i >= self.n for i in self.index_set):
            raise ValueError("index_set entries must be < n")
        return self


class SeedsSection(_Strict):
    common: Union[int, str] = 0
    idiosyncratic: Union[int, str] = 0

    @field_validator("common", "idiosyncratic")
    @classmethod
    def _seed(cls, v):
        try:
            return parse_seed(v)
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from None


class OutputSection(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class StudySection(_Strict):
    proxy_check: bool = False
    envelope_k: Optional[PosFloat] = None
    envelope_eps: PosFloat = 0.01


class ValidateSection(_Strict):
    samples: int = Field(1000, ge=2)
    strict_growth: bool = False


class ExperimentConfig(_Strict):
    model: ModelSection = Field(default_factory=lambda: SystemicRiskSection(name="systemic_risk"))
    sim: SimSection = Field(default_factory=SimSection)
    seeds: SeedsSection = Field(default_factory=SeedsSection)
    output: OutputSection = Field(default_factory=OutputSection)
    study: StudySection = Field(default_factory=StudySection)
    validate_: ValidateSection = Field(default_factory=ValidateSection, alias="validate")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    def echo(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def digest(self) -> str:
        text = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_TAGS = {"systemic_risk", "zero", "regime_switching"}


def _format_errors(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = [str(p) for p in e["loc"] if str(p) not in _TAGS]
        key = ".".join(loc) or "<root>"
        if e["type"] == "extra_forbidden":
            out.append(f"{key}: unknown key")
        else:
            out.append(f"{key}: {e['msg']}")
    return out


class ConfigErrors(ConfigurationError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    if isinstance(data.get("model"), dict) and "name" not in data["model"]:
        data["model"] = {**data["model"], "name": "systemic_risk"}
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigErrors(_format_errors(exc)) from None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a TOML experiment file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigErrors([f"config file not found: {p}"])
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigErrors([f"{p}: {exc}"]) from None
    return config_from_dict(data)


def n_ref_ok(cfg: ExperimentConfig, n_max: int) -> None:
    if n_max > cfg.sim.N_ref:
        raise ConfigErrors([f"sim.N_ref: must be >= {n_max}"])
