"""
Coupling densities |φ(ω)|², their widths Γ(E) = 2π|φ(E)|² and principal-value shifts Δ(E).

Built-in families (internal units, x = ω/Λ):
- hydrogen 2P-1S: Λ·x·(1+x²)^-4
- power-law with cutoff: Λ·x^(η-1)·(1+x²)^-(η+2), hydrogen is its η = 2 member
- channel sums: Σ_ν w_ν·component_ν(ω - ω_ν)
- tabulated: log-linear interpolation of (ω, density) samples
"""

from __future__ import annotations

import functools
import logging
import math
import pathlib
from typing import Iterable, Iterator, Literal

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special

from .errors import NumericalError, UndefinedZenoTimeError, UnsupportedOperationError
from .quadrature import quad

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
)

DensityKind = Literal["hydrogen2p1s", "power_law_cutoff", "channel_sum", "tabulated"]

# principal values are integrated by subtraction up to PV_CUTOFF_FACTOR * Λ, the rest is a plain tail integral
PV_CUTOFF_FACTOR = 1e3
# floor for log-interpolation of tabulated zeros
_LOG_FLOOR = 1e-300


class Channel(BaseModel):
    model_config = _config

    threshold: float = Field(ge=0.0)
    component: SpectralDensity
    weight: float = Field(default=1.0, gt=0.0)


class SpectralDensity(BaseModel):
    model_config = _config

    kind: DensityKind
    eta: float = Field(gt=0.0, description="threshold exponent, Γ(E) ∝ E^(η-1)")
    cutoff: float = Field(default=1.0, gt=0.0)
    scale: float = Field(default=1.0, ge=0.0)
    channels: tuple[Channel, ...] = ()
    table_omega: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()
    eta_declared: bool = True

    @model_validator(mode="after")
    def _check_kind(self) -> SpectralDensity:
        match self.kind:
            case "hydrogen2p1s" if self.eta != 2.0:
                raise ValueError("Hydrogen density has threshold exponent 2", self.eta)
            case "channel_sum" if not self.channels:
                raise ValueError("Channel sum needs at least one channel")
            case "tabulated":
                if len(self.table_omega) < 3 or len(self.table_omega) != len(self.table_values):
                    raise ValueError("Table needs at least 3 (omega, density) rows")
                if np.any(np.diff(self.table_omega) <= 0):
                    raise ValueError("Table omega values must be strictly increasing")
                if min(self.table_values) < 0 or self.table_omega[0] < 0:
                    raise ValueError("Table must be non-negative")
        if self.kind != "channel_sum" and self.channels:
            raise ValueError("Only channel sums have channels", self.kind)
        return self

    @classmethod
    def hydrogen(cls: type[Self]) -> Self:
        return cls(kind="hydrogen2p1s", eta=2.0)

    @classmethod
    def power_law(cls: type[Self], eta: float, *, cutoff: float = 1.0) -> Self:
        return cls(kind="power_law_cutoff", eta=eta, cutoff=cutoff)

    @classmethod
    def channel_sum(cls: type[Self], pairs: Iterable[tuple[float, SpectralDensity]]) -> Self:
        channels = tuple(Channel(threshold=threshold, component=component) for threshold, component in pairs)
        lowest = min(ch.threshold for ch in channels)
        eta = min(threshold_exponent(ch.component) for ch in channels if ch.threshold == lowest)
        return cls(kind="channel_sum", eta=eta, channels=channels)

    @classmethod
    def from_table(cls: type[Self], omega: Iterable[float], values: Iterable[float], eta: float | None = None) -> Self:
        omega = np.asarray(list(omega), dtype=float)
        values = np.asarray(list(values), dtype=float)
        declared = eta is not None

        if eta is None:
            above = (omega > omega[0]) & (values > 0)
            eta = estimate_threshold_exponent(omega[above][:10] - omega[0], values[above][:10])
            _logger.info("Estimated threshold exponent of tabulated density: eta=%.4f", eta)

        return cls(
            kind="tabulated",
            eta=eta,
            table_omega=tuple(omega.tolist()),
            table_values=tuple(values.tolist()),
            eta_declared=declared,
        )

    @classmethod
    def from_csv(cls: type[Self], path: str | pathlib.Path, eta: float | None = None) -> Self:
        """Two columns (ω, density) in internal units, an optional header row is skipped"""
        first_row = pd.read_csv(path, header=None, comment="#", nrows=1)
        header = None if pd.to_numeric(first_row.iloc[0, :2], errors="coerce").notna().all() else 0
        # round_trip parses every digit, the default C parser can be 1 ulp off
        frame = pd.read_csv(path, header=header, comment="#", float_precision="round_trip")
        frame = frame.iloc[:, :2].apply(pd.to_numeric, errors="coerce").dropna()
        return cls.from_table(frame.iloc[:, 0], frame.iloc[:, 1], eta=eta)

    def scaled(self, factor: float) -> Self:
        return self.model_copy(update={"scale": self.scale * factor})

    @property
    def is_continuable(self) -> bool:
        match self.kind:
            case "tabulated":
                return False
            case "channel_sum":
                return all(ch.component.is_continuable for ch in self.channels)
            case _:
                return True


Channel.model_rebuild()


class ShiftValue(BaseModel):
    model_config = _config

    E: float
    delta: float
    gamma: float = Field(ge=0.0)
    err_estimate: float = Field(default=0.0, ge=0.0)


def _density_array(sd: SpectralDensity, omega: np.ndarray) -> np.ndarray:
    match sd.kind:
        case "hydrogen2p1s" | "power_law_cutoff":
            above = omega > 0
            x = np.where(above, omega / sd.cutoff, 1.0)
            values = np.where(above, sd.cutoff * x ** (sd.eta - 1.0) * (1.0 + x * x) ** (-(sd.eta + 2.0)), 0.0)
        case "channel_sum":
            values = np.zeros_like(omega)
            for ch in sd.channels:
                values = values + ch.weight * _density_array(ch.component, omega - ch.threshold)
        case "tabulated":
            table_omega = np.asarray(sd.table_omega)
            log_values = np.log(np.maximum(np.asarray(sd.table_values), _LOG_FLOOR))
            inside = (omega >= table_omega[0]) & (omega <= table_omega[-1])
            values = np.where(inside, np.exp(np.interp(omega, table_omega, log_values)), 0.0)
            values = np.where(values > 2 * _LOG_FLOOR, values, 0.0)
        case _:
            raise ValueError("Unknown density kind", sd.kind)

    return sd.scale * values


def density(sd: SpectralDensity, omega: float | np.ndarray) -> float | np.ndarray:
    """|φ(ω)|², zero at and below threshold"""
    values = _density_array(sd, np.asarray(omega, dtype=float))
    return float(values) if np.ndim(omega) == 0 else values


def continued_density(sd: SpectralDensity, E: complex | np.ndarray) -> complex | np.ndarray:
    """
    Analytic continuation of the density off the real axis, used for the second Riemann sheet.
    Principal powers, i.e. valid in the half planes reached from the positive real axis without crossing (-∞, 0].
    """
    E_arr = np.asarray(E, dtype=complex)

    match sd.kind:
        case "hydrogen2p1s":
            x = E_arr / sd.cutoff
            values = sd.cutoff * x / (1.0 + x * x) ** 4
        case "power_law_cutoff":
            x = E_arr / sd.cutoff
            if float(sd.eta).is_integer():
                n = int(sd.eta)
                values = sd.cutoff * x ** (n - 1) / (1.0 + x * x) ** (n + 2)
            else:
                values = sd.cutoff * np.power(x, sd.eta - 1.0) * np.power(1.0 + x * x, -(sd.eta + 2.0))
        case "channel_sum":
            values = np.zeros_like(E_arr)
            for ch in sd.channels:
                values = values + ch.weight * continued_density(ch.component, E_arr - ch.threshold)
        case _:
            raise UnsupportedOperationError("No analytic continuation for this density", sd.kind)

    values = sd.scale * values
    return complex(values) if np.ndim(E) == 0 else values


def gamma_at(sd: SpectralDensity, E: float | np.ndarray) -> float | np.ndarray:
    """Γ(E) = 2π|φ(E)|²"""
    return 2.0 * math.pi * density(sd, E)


def threshold(sd: SpectralDensity) -> float:
    match sd.kind:
        case "channel_sum":
            return min(ch.threshold + threshold(ch.component) for ch in sd.channels)
        case "tabulated":
            return sd.table_omega[0]
        case _:
            return 0.0


def threshold_exponent(sd: SpectralDensity) -> float:
    match sd.kind:
        case "hydrogen2p1s":
            return 2.0
        case "channel_sum":
            lowest = threshold(sd)
            return min(
                threshold_exponent(ch.component)
                for ch in sd.channels
                if math.isclose(ch.threshold + threshold(ch.component), lowest)
            )
        case _:
            return sd.eta


def leading_coefficient(sd: SpectralDensity) -> float:
    """c with density(ω) ≈ c·(ω - threshold)^(η-1) as ω approaches the threshold from above"""
    match sd.kind:
        case "hydrogen2p1s" | "power_law_cutoff":
            return sd.scale * sd.cutoff ** (2.0 - sd.eta)
        case "channel_sum":
            lowest = threshold(sd)
            eta = threshold_exponent(sd)
            return sd.scale * sum(
                ch.weight * leading_coefficient(ch.component)
                for ch in sd.channels
                if math.isclose(ch.threshold + threshold(ch.component), lowest)
                and threshold_exponent(ch.component) == eta
            )
        case _:
            raise UnsupportedOperationError("Leading threshold coefficient needs a closed-form density", sd.kind)


def leaf_channels(sd: SpectralDensity, offset: float = 0.0, weight: float = 1.0) -> Iterator[tuple]:
    """
    `(threshold offset, single-threshold component, weight)` for every channel of a nested channel sum.
    The weight excludes the component's own `scale`, which `continued_density` applies.
    """
    match sd.kind:
        case "channel_sum":
            for ch in sd.channels:
                yield from leaf_channels(ch.component, offset + ch.threshold, weight * sd.scale * ch.weight)
        case "tabulated":
            raise UnsupportedOperationError("Rotated contours need an analytic density", sd.kind)
        case _:
            yield offset, sd, weight


def breakpoints(sd: SpectralDensity) -> list[float]:
    """Places where the density changes character, handed to adaptive quadrature"""
    match sd.kind:
        case "channel_sum":
            points = []
            for ch in sd.channels:
                points += [ch.threshold, *(ch.threshold + x for x in breakpoints(ch.component))]
            return sorted(set(points))
        case "tabulated":
            omega = sd.table_omega
            return [omega[0], *omega[1 :: max(len(omega) // 50, 1)], omega[-1]]
        case _:
            return [0.1 * sd.cutoff, sd.cutoff, 10.0 * sd.cutoff]


def delta_at(sd: SpectralDensity, E: float) -> ShiftValue:
    """
    Δ(E) = P∫ density(ω)/(E - ω) dω.

    Above threshold the singular point is removed by subtraction:
    ∫ [f(ω) - f(E)]/(E - ω) dω + f(E)·log((E - thr)/(E_max - E)) on [thr, E_max], plus the regular tail.
    """
    E = float(E)
    thr = threshold(sd)
    e_max = PV_CUTOFF_FACTOR * sd.cutoff + max(E, 0.0)
    points = breakpoints(sd)

    def plain(w: float) -> float:
        return _density_scalar(sd, w) / (E - w)

    if E <= thr:
        value, err = quad(plain, thr, e_max, points=points, location=E)
    else:
        f_E = _density_scalar(sd, E)

        def subtracted(w: float) -> float:
            if w == E:
                return 0.0
            return (_density_scalar(sd, w) - f_E) / (E - w)

        value, err = quad(subtracted, thr, e_max, points=[E, *points], location=E)
        value += f_E * math.log((E - thr) / (e_max - E))

    tail, tail_err = quad(plain, e_max, math.inf, location=E)
    return ShiftValue(E=E, delta=value + tail, gamma=gamma_at(sd, E), err_estimate=err + tail_err)


def _density_scalar(sd: SpectralDensity, w: float) -> float:
    return float(_density_array(sd, np.asarray(w, dtype=float)))


def second_moment(sd: SpectralDensity) -> float:
    """∫ density(ω) dω, i.e. ⟨V²⟩ of the unit-coupling interaction"""
    match sd.kind:
        case "hydrogen2p1s" | "power_law_cutoff":
            # ∫ x^(η-1) (1+x²)^-(η+2) dx = B(η/2, η/2 + 2) / 2
            value = sd.scale * sd.cutoff**2 * 0.5 * special.beta(0.5 * sd.eta, 0.5 * sd.eta + 2.0)
        case "channel_sum":
            value = sd.scale * sum(ch.weight * second_moment(ch.component) for ch in sd.channels)
        case "tabulated":
            value, _ = quad(
                functools.partial(_density_scalar, sd),
                sd.table_omega[0],
                sd.table_omega[-1],
                points=breakpoints(sd),
                epsrel=1e-8,
            )
        case _:
            raise ValueError("Unknown density kind", sd.kind)

    if not math.isfinite(value):
        raise UndefinedZenoTimeError("Second moment of the density diverges", sd.kind)

    return float(value)


def estimate_threshold_exponent(omega: Iterable[float], values: Iterable[float]) -> float:
    """
    η from the log-log slope of density samples taken close above the threshold (ω measured from it).
    """
    omega = np.asarray(list(omega), dtype=float)
    values = np.asarray(list(values), dtype=float)
    mask = (omega > 0) & (values > 0)

    if mask.sum() < 3:
        raise NumericalError("Need at least 3 positive samples to estimate the threshold exponent", mask.sum())

    log_omega, log_values = np.log(omega[mask]), np.log(values[mask])
    (slope, intercept) = np.polyfit(log_omega, log_values, 1)
    residuals = log_values - (slope * log_omega + intercept)
    spread = np.sum((log_values - log_values.mean()) ** 2)
    r_squared = 1.0 - np.sum(residuals**2) / spread if spread > 0 else 0.0

    if r_squared < 0.999 or slope <= -1.0:
        raise NumericalError("Density threshold is not a power law", slope, r_squared)

    return float(slope + 1.0)
