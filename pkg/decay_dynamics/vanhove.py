"""
The λ²t limit: rescaled time t̃ = λ²t, λ sweeps and convergence of the exact dynamics to the limiting exponential.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .amplitude import Engine, SurvivalSeries, TimeGrid, compute_series
from .asymptotics import (
    AsymptoticCoefficients,
    Convention,
    coefficients,
    lifetime,
    long_time_P,
    power_transition_time,
    zeno_time,
)
from .errors import ConfigError, DecayError, StableStateError
from .logging_config import logging_with_values
from .params import ModelParams
from .selfenergy import sigma2, sigma2_array
from .spectral import SpectralDensity, gamma_at, threshold_exponent

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
)

# the pole leaves the perturbative disk above this
MAX_SWEEP_LAMBDA = 0.1
# D(λ) grid, log-spaced in units of τ̃_E
DEVIATION_GRID = (1e-4, 5.0)
DEVIATION_POINTS = 200


class LinearFit(BaseModel):
    model_config = _config

    slope: float
    intercept: float
    slope_stderr: float
    count: int = Field(ge=2)


class SweepPoint(BaseModel):
    model_config = _config

    lambda_: float = Field(gt=0.0)
    tau_Z_tilde: float | None = None
    tau_E_tilde: float | None = None
    tau_pow_tilde: float | None = None
    x: float | None = Field(default=None, description="τ_pow / τ_E")
    osc_scale: float | None = Field(default=None, description="λ^{2(η+1)}")
    cross_amplitude: float | None = None
    deviation: float | None = Field(default=None, description="D(λ) = max |P(t̃/λ²) - e^{-t̃/τ̃_E}|")
    deviation_at: float | None = Field(default=None, description="t̃ of the maximum deviation")
    error: str | None = None


class ScalingReport(BaseModel):
    model_config = _config

    points: list[SweepPoint]
    fits: dict[str, LinearFit]

    @field_validator("points")
    @classmethod
    def _check_points(cls, points: list[SweepPoint]) -> list[SweepPoint]:
        lambdas = [x.lambda_ for x in points]
        if any(a <= b for a, b in zip(lambdas, lambdas[1:])):
            raise ValueError("Sweep lambdas must be strictly decreasing", lambdas)
        for point in points:
            if point.deviation is not None and not math.isfinite(point.deviation):
                raise ValueError("Deviation must be finite", point.lambda_, point.deviation)
        return points

    @property
    def lambdas(self) -> list[float]:
        return [x.lambda_ for x in self.points]


class ConvergenceReport(BaseModel):
    model_config = _config

    lambdas: list[float]
    deviations: list[float]
    deviation_at: list[float]
    monotone: bool
    order: float | None = Field(description="slope of log D against log λ")


def rescale_time(params: ModelParams, t_tilde: float | np.ndarray) -> float | np.ndarray:
    """t = t̃/λ²"""
    if params.lambda_ == 0.0:
        raise ConfigError("Rescaled time needs a positive coupling", params.lambda_)
    if np.any(np.asarray(t_tilde) < 0):
        raise ValueError("Rescaled time must be non-negative", t_tilde)
    return t_tilde / params.lambda_**2


def check_lambdas(lambdas: list[float]) -> list[float]:
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ConfigError("Sweep needs at least one lambda")
    if any(not 0.0 < x < MAX_SWEEP_LAMBDA for x in lambdas):
        raise ConfigError(f"Sweep lambdas must lie in (0, {MAX_SWEEP_LAMBDA})", lambdas)
    if any(a <= b for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("Sweep lambdas must be strictly decreasing", lambdas)
    return lambdas


def deviation_grid(sd: SpectralDensity, omega0: float, count: int = DEVIATION_POINTS) -> np.ndarray:
    """Log-spaced t̃ in [1e-4·τ̃_E, 5·τ̃_E], τ̃_E = 1/Γ(ω₀) does not depend on λ"""
    width = gamma_at(sd, omega0)
    if width == 0.0:
        raise StableStateError("Gamma(omega0) = 0, there is no exponential to converge to", omega0)
    tau_E_tilde = 1.0 / width
    return np.geomspace(DEVIATION_GRID[0] * tau_E_tilde, DEVIATION_GRID[1] * tau_E_tilde, count)


def _rescaled_series(
    params: ModelParams, sd: SpectralDensity, t_tilde: np.ndarray, engine: Engine
) -> tuple[SurvivalSeries, np.ndarray]:
    """The series of `engine` on t = t̃/λ², plus P"""
    if engine == "vanhove_limit":
        series = compute_series(params, sd, TimeGrid(points=t_tilde, scale_hint="log"), engine)
    else:
        series = compute_series(params, sd, TimeGrid(points=rescale_time(params, t_tilde), scale_hint="log"), engine)
    return series, series.probability


def _deviation(probability: np.ndarray, t_tilde: np.ndarray, gamma: float) -> tuple[float, float]:
    difference = np.abs(probability - np.exp(-gamma * t_tilde))
    index = int(np.argmax(difference))
    return float(difference[index]), float(t_tilde[index])


def _cross_amplitude(series: SurvivalSeries, t_tilde: np.ndarray, tau_E_tilde: float) -> float | None:
    """Envelope 2|A_pole||A_cut| of the interference term in P, at the grid point closest to t̃ = τ̃_E"""
    if series.pole_part is None or series.cut_part is None:
        return None
    index = int(np.argmin(np.abs(t_tilde - tau_E_tilde)))
    return float(2.0 * abs(series.pole_part[index]) * abs(series.cut_part[index]))


@logging_with_values(get_context=lambda params_template, sd, lambda_, *args, **kwargs: {"lambda": lambda_})
def sweep_point(
    params_template: ModelParams,
    sd: SpectralDensity,
    lambda_: float,
    t_tilde_grid: np.ndarray | None = None,
    engine: Engine = "pole_cut",
    convention: Convention = "literal",
) -> SweepPoint:
    """Timescales and deviation for one λ; a failing engine is recorded in `error`"""
    params = params_template.with_lambda(lambda_)
    lambda2 = params.lambda_**2
    values = {"lambda_": params.lambda_, "osc_scale": params.lambda_ ** (2.0 * (threshold_exponent(sd) + 1.0))}
    try:
        t_tilde = deviation_grid(sd, params.omega0) if t_tilde_grid is None else np.asarray(t_tilde_grid, dtype=float)
        values["tau_Z_tilde"] = lambda2 * zeno_time(params, sd)
        values["tau_E_tilde"] = lambda2 * lifetime(params, sd)

        transition = power_transition_time(params, coefficients(params, sd), convention)
        values["tau_pow_tilde"] = lambda2 * transition.tau_pow
        values["x"] = transition.x

        series, probability = _rescaled_series(params, sd, t_tilde, engine)
        values["deviation"], values["deviation_at"] = _deviation(probability, t_tilde, gamma_at(sd, params.omega0))
        values["cross_amplitude"] = _cross_amplitude(series, t_tilde, values["tau_E_tilde"])
    except DecayError as e:
        _logger.warning("Sweep point failed: %r", e)
        values["error"] = repr(e)

    _logger.info("Sweep point done: D=%s", values.get("deviation"))
    return SweepPoint(**values)


def _linear_fit(x: list[float], y: list[float]) -> LinearFit | None:
    if len(x) < 2:
        return None
    if len(x) < 3:
        slope, intercept = np.polyfit(x, y, 1)
        return LinearFit(slope=slope, intercept=intercept, slope_stderr=math.nan, count=len(x))

    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    return LinearFit(slope=slope, intercept=intercept, slope_stderr=math.sqrt(cov[0, 0]), count=len(x))


def assemble_report(points: list[SweepPoint], eta: float) -> ScalingReport:
    """
    Fits over the successful points:
    - tau_Z: τ̃_Z against λ
    - tau_pow: τ_pow/τ_E against ln(1/λ), with and without the 2η·ln(x) term removed
    - cross_amplitude: log of the interference envelope against log λ
    """
    fits = {}
    done = [x for x in points if x.error is None]

    fit = _linear_fit([x.lambda_ for x in done], [x.tau_Z_tilde for x in done])
    if fit is not None:
        fits["tau_Z"] = fit

    logs = [math.log(1.0 / x.lambda_) for x in done]
    fit = _linear_fit(logs, [x.x for x in done])
    if fit is not None:
        fits["tau_pow"] = fit
    fit = _linear_fit(logs, [x.x - 2.0 * eta * math.log(x.x) for x in done])
    if fit is not None:
        fits["tau_pow_corrected"] = fit

    crossing = [x for x in done if x.cross_amplitude]
    fit = _linear_fit([math.log(x.lambda_) for x in crossing], [math.log(x.cross_amplitude) for x in crossing])
    if fit is not None:
        fits["cross_amplitude"] = fit

    return ScalingReport(points=points, fits=fits)


def sweep(
    params_template: ModelParams,
    sd: SpectralDensity,
    lambdas: list[float],
    *,
    engine: Engine = "pole_cut",
    t_tilde_grid: np.ndarray | None = None,
    convention: Convention = "literal",
) -> ScalingReport:
    lambdas = check_lambdas(lambdas)
    points = [sweep_point(params_template, sd, x, t_tilde_grid, engine, convention) for x in lambdas]
    return assemble_report(points, threshold_exponent(sd))


def convergence_to_exponential(
    params_template: ModelParams,
    sd: SpectralDensity,
    lambdas: list[float],
    engine: Engine = "pole_cut",
    t_tilde_grid: np.ndarray | None = None,
) -> ConvergenceReport:
    """D(λ) = max over t̃ of |P(t̃/λ²) - e^{-Γ(ω₀)t̃}|, expected to decrease along the sweep"""
    lambdas = check_lambdas(lambdas)
    t_tilde = deviation_grid(sd, params_template.omega0) if t_tilde_grid is None else np.asarray(t_tilde_grid)
    gamma = gamma_at(sd, params_template.omega0)

    deviations, positions = [], []
    for lambda_ in lambdas:
        _, probability = _rescaled_series(params_template.with_lambda(lambda_), sd, t_tilde, engine)
        deviation, position = _deviation(probability, t_tilde, gamma)
        deviations.append(deviation)
        positions.append(position)
        _logger.debug("lambda=%.3e: D=%.3e at t~=%.3e", lambda_, deviation, position)

    monotone = all(a > b for a, b in zip(deviations, deviations[1:]))
    if not monotone and len(lambdas) > 1 and max(deviations) > 0:
        _logger.warning("Deviation from the exponential is not decreasing along the sweep: %s", deviations)

    positive = [(x, d) for x, d in zip(lambdas, deviations) if d > 0]
    fit = _linear_fit([math.log(x) for x, _ in positive], [math.log(d) for _, d in positive])

    return ConvergenceReport(
        lambdas=lambdas,
        deviations=deviations,
        deviation_at=positions,
        monotone=monotone,
        order=fit.slope if fit is not None else None,
    )


def rescaled_propagator_deviation(
    params_template: ModelParams,
    sd: SpectralDensity,
    lambdas: list[float],
    energies: list[complex],
) -> np.ndarray:
    """
    |1/(Ẽ - Σ(ω₀ + λ²Ẽ)) - 1/(Ẽ - Σ(ω₀ + i0⁺))| for every λ (rows) and rescaled energy Ẽ (columns), Im Ẽ > 0.
    """
    lambdas = check_lambdas(lambdas)
    energies = np.asarray(energies, dtype=complex)
    if np.any(energies.imag <= 0):
        raise ConfigError("Rescaled energies must lie in the upper half plane", energies)

    limit = 1.0 / (energies - sigma2(params_template, sd, params_template.omega0).value)
    rows = []
    for lambda_ in lambdas:
        params = params_template.with_lambda(lambda_)
        exact = 1.0 / (energies - sigma2_array(params, sd, params.omega0 + lambda_**2 * energies))
        rows.append(np.abs(exact - limit))

    return np.array(rows)


def rescaled_long_time_P(t_tilde: float | np.ndarray, coeffs: AsymptoticCoefficients) -> float | np.ndarray:
    """Long-time law with t = t̃/λ² substituted, so the tail and cross terms carry λ^{4(η+1)} and λ^{2(η+1)}"""
    if coeffs.lambda_ == 0.0:
        raise ConfigError("Rescaled time needs a positive coupling", coeffs.lambda_)
    return long_time_P(np.asarray(t_tilde, dtype=float) / coeffs.lambda_**2, coeffs)
