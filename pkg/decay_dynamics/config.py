"""
Run configuration: a flat key=value file merged with command-line flags (flags win).
"""

from __future__ import annotations

import logging
import pathlib
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .amplitude import Engine, TimeGrid
from .asymptotics import lifetime
from .errors import ConfigError
from .params import CODATA_CONSTANTS, ModelParams, PhysicalConstants, generic_params, hydrogen_params, to_internal
from .spectral import SpectralDensity

_logger = logging.getLogger(__name__)

MAX_TCOUNT = 10_000_000

# desk-scale defaults for the generic model
GENERIC_LAMBDA = 0.05
GENERIC_OMEGA0 = 0.25
GENERIC_ETA = 2.0


class RunConfig(BaseModel):
    model_config = ConfigDict(
        validate_assignment=True,
        validate_default=True,
        extra="forbid",
        frozen=True,
        populate_by_name=True,
    )

    model: Literal["hydrogen", "generic", "table"] = "hydrogen"
    alpha: float | None = Field(default=None, gt=0.0, lt=0.01)
    m_e: float | None = Field(default=None, gt=0.0)
    lambda_: float | None = Field(default=None, alias="lambda", ge=0.0)
    cutoff: float = Field(default=1.0, gt=0.0, description="Λ in rad/s, 1 keeps internal units")
    omega0: float | None = Field(default=None, gt=0.0, description="E_a in the units of `cutoff`")
    eta: float | None = Field(default=None, gt=0.0)
    table: pathlib.Path | None = None

    engine: Engine = "pole_cut"
    tmin: float = Field(default=0.0, ge=0.0)
    tmax: float = Field(default=5.0, ge=0.0)
    tcount: int = 101
    tspacing: Literal["linear", "log"] = "linear"
    tunit: Literal["tau_E", "internal", "seconds"] = "tau_E"

    format: Literal["csv", "json"] = "csv"
    out: pathlib.Path | None = None
    lambdas: tuple[float, ...] = (3e-2, 1e-2, 3e-3, 1e-3)

    pole_tol: float = Field(default=1e-12, gt=0.0)
    volterra_tol: float = Field(default=1e-8, gt=0.0)
    volterra_step: float | None = Field(default=None, gt=0.0)

    @field_validator("lambdas", mode="before")
    @classmethod
    def _split_lambdas(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(float(x) for x in value.replace(",", " ").split())
        return value

    @model_validator(mode="after")
    def _check_config(self) -> RunConfig:
        if (self.model == "table") != (self.table is not None):
            raise ValueError("Table path must be given exactly when model=table", self.model, self.table)
        if self.tmax < self.tmin:
            raise ValueError("tmax must not be below tmin", self.tmin, self.tmax)
        if self.tmin != self.tmax and not 2 <= self.tcount <= MAX_TCOUNT:
            raise ValueError(f"tcount must lie in [2, {MAX_TCOUNT}]", self.tcount)
        if self.tspacing == "log" and self.tmin <= 0:
            raise ValueError("Log spacing needs tmin > 0", self.tmin)
        if self.model == "hydrogen" and (self.omega0 is not None or self.eta is not None):
            raise ValueError("Hydrogen model takes neither omega0 nor eta")
        return self

    def build_params(self) -> ModelParams:
        match self.model:
            case "hydrogen":
                constants = CODATA_CONSTANTS
                if self.alpha is not None or self.m_e is not None:
                    constants = PhysicalConstants(
                        alpha=self.alpha if self.alpha is not None else constants.alpha,
                        m_e=self.m_e if self.m_e is not None else constants.m_e,
                    )
                params = hydrogen_params(constants)
                return params if self.lambda_ is None else params.with_lambda(self.lambda_)
            case _:
                lambda_ = self.lambda_ if self.lambda_ is not None else GENERIC_LAMBDA
                omega0 = self.omega0 if self.omega0 is not None else GENERIC_OMEGA0 * self.cutoff
                return generic_params(lambda_, self.cutoff, omega0)

    def build_density(self) -> SpectralDensity:
        match self.model:
            case "hydrogen":
                return SpectralDensity.hydrogen()
            case "generic":
                return SpectralDensity.power_law(self.eta if self.eta is not None else GENERIC_ETA)
            case "table":
                try:
                    return SpectralDensity.from_csv(self.table, eta=self.eta)
                except (OSError, ValueError) as e:
                    raise ConfigError("Unable to load tabulated density", str(self.table)) from e
            case _:
                raise ConfigError("Unknown model", self.model)

    def build_grid(self, params: ModelParams, sd: SpectralDensity) -> TimeGrid:
        """Grid in internal time units"""
        match self.tunit:
            case "tau_E":
                scale = lifetime(params, sd)
                if not np.isfinite(scale):
                    raise ConfigError("Times in units of tau_E need a positive coupling", params.lambda_)
                tmin, tmax = self.tmin * scale, self.tmax * scale
            case "seconds":
                tmin, tmax = to_internal(params, self.tmin), to_internal(params, self.tmax)
            case _:
                tmin, tmax = self.tmin, self.tmax

        if self.tspacing == "log":
            return TimeGrid.log(tmin, tmax, self.tcount)
        return TimeGrid.linear(tmin, tmax, self.tcount)


def parse_config_file(path: str | pathlib.Path) -> dict[str, str]:
    """key=value per line, `#` starts a comment"""
    result = {}
    try:
        text = pathlib.Path(path).read_text()
    except OSError as e:
        raise ConfigError("Unable to read config file", str(path)) from e

    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        if not separator or not key.strip():
            raise ConfigError("Expected key=value", str(path), number, line)
        result[key.strip()] = value.strip()

    return result


def load_config(path: str | pathlib.Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = parse_config_file(path) if path is not None else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    _logger.debug("Run config values: %s", values)

    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError("Invalid run configuration", str(e)) from e
