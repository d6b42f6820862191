"""
Model parameters and unit handling.

Internally every energy is measured in units of the cutoff Λ and every time in units of 1/Λ,
`unit_scale` keeps the value of one internal energy unit in rad/s.
"""

from __future__ import annotations

import functools
import logging
import math
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from .errors import ConfigError

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
    populate_by_name=True,
)


class PhysicalConstants(BaseModel):
    model_config = _config

    alpha: float = Field(gt=0.0, lt=0.01, description="fine-structure constant")
    m_e: float = Field(gt=0.0, description="electron rest frequency m_e c^2 / hbar in rad/s")


# CODATA-class defaults, overridable from the run config
CODATA_CONSTANTS = PhysicalConstants(alpha=7.2973525693e-3, m_e=7.763440711e20)


class ModelParams(BaseModel):
    model_config = _config

    lambda_: float = Field(alias="lambda", ge=0.0, description="dimensionless coupling")
    cutoff: float = Field(default=1.0, gt=0.0, description="cutoff in internal units")
    omega0: float = Field(gt=0.0, description="initial-state energy E_a in internal units")
    unit_scale: float = Field(default=1.0, gt=0.0, description="rad/s per internal energy unit")

    @model_validator(mode="after")
    def _check_omega0(self) -> ModelParams:
        if not self.omega0 < self.cutoff:
            raise ValueError("omega0 must lie below the cutoff", self.omega0, self.cutoff)
        if not all(math.isfinite(x) for x in (self.lambda_, self.cutoff, self.omega0, self.unit_scale)):
            raise ValueError("Model parameters must be finite")
        return self

    @computed_field
    @functools.cached_property
    def cutoff_si(self) -> float:
        return self.cutoff * self.unit_scale

    @computed_field
    @functools.cached_property
    def omega0_si(self) -> float:
        return self.omega0 * self.unit_scale

    def with_lambda(self, lambda_: float) -> Self:
        return self.model_copy(update={"lambda_": float(lambda_)})

    def require_coupling(self) -> None:
        if self.lambda_ <= 0.0:
            raise ConfigError("Operation needs a positive coupling", self.lambda_)


def hydrogen_params(constants: PhysicalConstants = CODATA_CONSTANTS) -> ModelParams:
    """2P-1S transition of hydrogen, there are no free parameters"""
    cutoff_si = 1.5 * constants.alpha * constants.m_e
    omega0_si = 0.375 * constants.alpha**2 * constants.m_e
    lambda_ = math.sqrt(2.0 / math.pi) * (2.0 / 3.0) ** 4.5 * constants.alpha**1.5
    return ModelParams(lambda_=lambda_, cutoff=1.0, omega0=omega0_si / cutoff_si, unit_scale=cutoff_si)


def generic_params(lambda_: float, cutoff_si: float, omega0_si: float) -> ModelParams:
    try:
        return ModelParams(lambda_=lambda_, cutoff=1.0, omega0=omega0_si / cutoff_si, unit_scale=cutoff_si)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError("Invalid generic model parameters", lambda_, cutoff_si, omega0_si) from e


def _check_finite(value: float | np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise ConfigError("Time values must be finite", value)


def to_internal(params: ModelParams, t_si: float | np.ndarray) -> float | np.ndarray:
    _check_finite(t_si)
    return t_si * params.unit_scale


def from_internal(params: ModelParams, t: float | np.ndarray) -> float | np.ndarray:
    _check_finite(t)
    return t / params.unit_scale


def energy_to_si(params: ModelParams, energy: float) -> float:
    """Internal energy (or rate) to rad/s (or 1/s)"""
    return energy * params.unit_scale


def energy_to_internal(params: ModelParams, energy_si: float) -> float:
    return energy_si / params.unit_scale
