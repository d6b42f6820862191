"""
Time scales and long-time asymptotics.

Near the threshold the cut contribution behaves as A_cut(t) ≈ λ²·C·e^{iE_a·t}/(E_a·t)^η with E_a = ω₀ - threshold,
so at long times
    P(t) ≈ |Z|²e^{-γt} + λ⁴|C|²/(E_a t)^{2η} + 2λ²|ZC|/(E_a t)^η · e^{-γt/2} · cos[(E_a + ΔE)t - ζ_c]
with ζ_c = Arg Z - Arg C.
"""

from __future__ import annotations

import cmath
import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy import optimize, special

from .amplitude import SurvivalSeries
from .errors import ConvergenceError, OutOfRegimeError, RegimeNotReachedError, StableStateError
from .params import ModelParams
from .pole import find_pole
from .selfenergy import sigma2
from .spectral import SpectralDensity, gamma_at, leading_coefficient, second_moment, threshold, threshold_exponent

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
)

Convention = Literal["literal", "as_written"]

FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITERATIONS = 500
FIT_R_SQUARED = 0.999
# relative mismatch between fitted and stored |Z| that is worth a warning
Z_CROSS_CHECK = 1e-3


class TimeScales(BaseModel):
    model_config = _config

    tau_Z: float = Field(gt=0.0)
    tau_E: float = Field(gt=0.0)
    tau_pow: float | None = None
    lambda_: float = Field(ge=0.0)
    unit_scale: float = Field(gt=0.0)

    @computed_field
    @property
    def rescaled(self) -> dict[str, float | None]:
        """λ²·τ for every time scale"""
        lambda2 = self.lambda_**2
        return {
            "tau_Z": lambda2 * self.tau_Z if lambda2 > 0 else math.nan,
            "tau_E": lambda2 * self.tau_E if lambda2 > 0 else math.nan,
            "tau_pow": lambda2 * self.tau_pow if lambda2 > 0 and self.tau_pow is not None else None,
        }

    @computed_field
    @property
    def seconds(self) -> dict[str, float | None]:
        return {
            "tau_Z": self.tau_Z / self.unit_scale,
            "tau_E": self.tau_E / self.unit_scale,
            "tau_pow": self.tau_pow / self.unit_scale if self.tau_pow is not None else None,
        }


class AsymptoticCoefficients(BaseModel):
    model_config = _config

    Z_mag: float = Field(gt=0.0)
    zeta: float
    C: complex
    eta: float = Field(gt=0.0)
    delta_E: float
    gamma: float = Field(ge=0.0, description="pole width, including the λ² factor")
    E_a: float = Field(gt=0.0, description="initial energy measured from the threshold")
    width: float = Field(gt=0.0, description="Γ(E_a), without the λ² factor")
    lambda_: float = Field(ge=0.0)

    @computed_field
    @property
    def C_mag(self) -> float:
        return abs(self.C)

    @computed_field
    @property
    def zeta_c(self) -> float:
        """Phase of the cross term, Arg Z - Arg C"""
        return -self.zeta - cmath.phase(self.C)

    @property
    def residue(self) -> complex:
        return self.Z_mag * cmath.exp(-1j * self.zeta)


class PowerTransition(BaseModel):
    model_config = _config

    x: float = Field(gt=0.0, description="τ_pow / τ_E")
    tau_pow: float
    tau_E: float
    leading: float = Field(description="4(η+1)·ln(1/λ)·τ_E")
    convention: Convention
    other_x: float | None = Field(description="τ_pow / τ_E for the other convention")
    iterations: int


def zeno_time(params: ModelParams, sd: SpectralDensity) -> float:
    """τ_Z = 1/(λ·√∫density)"""
    if params.lambda_ == 0.0:
        return math.inf
    return 1.0 / (params.lambda_ * math.sqrt(second_moment(sd)))


def lifetime(params: ModelParams, sd: SpectralDensity) -> float:
    """τ_E = 1/(λ²Γ(ω₀))"""
    width = gamma_at(sd, params.omega0)
    if width == 0.0:
        raise StableStateError("Gamma(omega0) = 0, the lifetime is infinite", params.omega0)
    if params.lambda_ == 0.0:
        return math.inf
    return 1.0 / (params.lambda_**2 * width)


def excitation_energy(params: ModelParams, sd: SpectralDensity) -> float:
    """E_a = ω₀ - threshold"""
    return params.omega0 - threshold(sd)


def cut_coefficient(params: ModelParams, sd: SpectralDensity) -> complex:
    """C = c_η·Γ(η)·(-i)^η·E_a^η / (E_a + λ²Σ(thr))², from the threshold behaviour of the cut integral"""
    thr = threshold(sd)
    eta = threshold_exponent(sd)
    e_a = excitation_energy(params, sd)

    sigma_thr = sigma2(params, sd, thr).value.real
    if not math.isfinite(sigma_thr):
        raise OutOfRegimeError("Self-energy diverges at the threshold", eta)

    denominator = e_a + params.lambda_**2 * sigma_thr
    if denominator <= 0.0:
        raise OutOfRegimeError("Bound state below threshold, there is no power-law tail", denominator)

    phase = cmath.exp(-0.5j * math.pi * eta)
    return leading_coefficient(sd) * special.gamma(eta) * phase * e_a**eta / denominator**2


def coefficients(params: ModelParams, sd: SpectralDensity) -> AsymptoticCoefficients:
    params.require_coupling()
    pole = find_pole(params, sd)
    return AsymptoticCoefficients(
        Z_mag=pole.z_magnitude,
        zeta=pole.zeta,
        C=cut_coefficient(params, sd),
        eta=threshold_exponent(sd),
        delta_E=pole.delta_E,
        gamma=pole.gamma,
        E_a=excitation_energy(params, sd),
        width=gamma_at(sd, params.omega0),
        lambda_=params.lambda_,
    )


def long_time_P(t: float | np.ndarray, coeffs: AsymptoticCoefficients) -> float | np.ndarray:
    """Three-term long-time law, valid for t ≫ τ_Z"""
    t = np.asarray(t, dtype=float)
    lambda2 = coeffs.lambda_**2
    power = (coeffs.E_a * t) ** coeffs.eta

    with np.errstate(divide="ignore", invalid="ignore"):
        exponential = coeffs.Z_mag**2 * np.exp(-coeffs.gamma * t)
        tail = lambda2**2 * coeffs.C_mag**2 / power**2
        cross = (
            2.0
            * lambda2
            * coeffs.Z_mag
            * coeffs.C_mag
            / power
            * np.exp(-0.5 * coeffs.gamma * t)
            * np.cos((coeffs.E_a + coeffs.delta_E) * t - coeffs.zeta_c)
        )

    result = exponential + tail + cross
    return float(result) if result.ndim == 0 else result


# region τ_pow


def _transition_terms(
    params: ModelParams, coeffs: AsymptoticCoefficients, convention: Convention
) -> tuple[float, float]:
    """(b, k) of the fixed-point equation x = b + k·ln(x)"""
    log_inv_lambda = math.log(1.0 / params.lambda_)
    log_ratio = math.log(coeffs.Z_mag / coeffs.C_mag)
    base = 4.0 * (coeffs.eta + 1.0) * log_inv_lambda + 2.0 * coeffs.eta * math.log(coeffs.E_a / coeffs.width)

    match convention:
        case "literal":
            # |Z|²e^{-x} = λ⁴|C|²/(E_a τ_E x)^{2η} solved for x = t/τ_E
            return base + 2.0 * log_ratio, 2.0 * coeffs.eta
        case "as_written":
            return base + log_ratio, coeffs.eta
        case _:
            raise ValueError("Unknown convention", convention)


def _fixed_point(b: float, k: float) -> tuple[float, int]:
    x = b
    for iteration in range(1, FIXED_POINT_MAX_ITERATIONS + 1):
        if x <= 0.0 or k / x >= 1.0:
            raise ConvergenceError("Crossover iteration is not a contraction", iterations=iteration, residual=x)

        updated = b + k * math.log(x)
        if abs(updated - x) < FIXED_POINT_TOL:
            return updated, iteration
        x = updated

    raise ConvergenceError("Crossover iteration did not converge", iterations=FIXED_POINT_MAX_ITERATIONS, residual=x)


def power_transition_time(
    params: ModelParams,
    coeffs: AsymptoticCoefficients,
    convention: Convention = "literal",
) -> PowerTransition:
    """
    τ_pow, where the exponential term meets the power-law tail, as a multiple x of τ_E = 1/(λ²Γ(E_a)).
    Iterates x = b + k·ln(x) from x₀ = 4(η+1)·ln(1/λ).
    """
    if not 0.0 < params.lambda_ < 1.0:
        raise OutOfRegimeError("Crossover time needs 0 < lambda < 1", params.lambda_)

    tau_E = 1.0 / (params.lambda_**2 * coeffs.width)
    b, k = _transition_terms(params, coeffs, convention)
    x, iterations = _fixed_point(b, k)

    other = "as_written" if convention == "literal" else "literal"
    try:
        other_x = _fixed_point(*_transition_terms(params, coeffs, other))[0]
    except ConvergenceError:
        other_x = None

    return PowerTransition(
        x=x,
        tau_pow=x * tau_E,
        tau_E=tau_E,
        leading=4.0 * (coeffs.eta + 1.0) * math.log(1.0 / params.lambda_) * tau_E,
        convention=convention,
        other_x=other_x,
        iterations=iterations,
    )


def bisect_transition_time(
    params: ModelParams,
    coeffs: AsymptoticCoefficients,
    convention: Convention = "literal",
) -> float:
    """The larger root of x - b - k·ln(x), by bracketing"""
    b, k = _transition_terms(params, coeffs, convention)

    def residual(x: float) -> float:
        return x - b - k * math.log(x)

    lower = k
    if residual(lower) >= 0.0:
        raise ConvergenceError("Crossover equation has no root above its minimum", iterations=0, residual=lower)

    upper = max(2.0 * b, 2.0 * k)
    while residual(upper) <= 0.0:
        upper *= 2.0

    return optimize.brentq(residual, lower, upper, xtol=1e-14, rtol=1e-15)


# endregion


def timescales(params: ModelParams, sd: SpectralDensity, convention: Convention = "literal") -> TimeScales:
    if params.lambda_ == 0.0:
        return TimeScales(
            tau_Z=math.inf, tau_E=math.inf, tau_pow=math.inf, lambda_=0.0, unit_scale=params.unit_scale
        )

    transition = power_transition_time(params, coefficients(params, sd), convention)
    return TimeScales(
        tau_Z=zeno_time(params, sd),
        tau_E=lifetime(params, sd),
        tau_pow=transition.tau_pow,
        lambda_=params.lambda_,
        unit_scale=params.unit_scale,
    )


def _log_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line through (x, y), returns (slope, intercept, R²)"""
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    spread = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - np.sum(residuals**2) / spread if spread > 0 else 1.0
    return float(slope), float(intercept), float(r_squared)


def _tail_fit(times: np.ndarray, cut: np.ndarray, e_a: float) -> tuple[float, float, complex, float]:
    """
    ln|A_cut| = b₀ - η·ln t + b₁/t and arg(A_cut·e^{-iE_a·t}) = p₀ + p₁/t by least squares.
    Returns (η, e^{b₀}, e^{ip₀}, R² of the magnitude fit).
    """
    log_mag = np.log(np.abs(cut))
    design = np.column_stack([np.ones_like(times), np.log(times), 1.0 / times])
    coeffs, *_ = np.linalg.lstsq(design, log_mag, rcond=None)
    residuals = log_mag - design @ coeffs
    spread = np.sum((log_mag - log_mag.mean()) ** 2)
    r_squared = 1.0 - np.sum(residuals**2) / spread if spread > 0 else 1.0

    phase = np.unwrap(np.angle(cut * np.exp(-1j * e_a * times)))
    _, p0 = np.polyfit(1.0 / times, phase, 1)
    return float(-coeffs[1]), math.exp(coeffs[0]), cmath.exp(1j * p0), float(r_squared)


def extract_coefficients(
    series: SurvivalSeries, params: ModelParams, sd: SpectralDensity, tau_pow: float
) -> AsymptoticCoefficients:
    """
    Reads η and C off |A_cut| on [5τ_pow/4, 4τ_pow], and the pole data off the stored pole part.
    |Z| is refitted from |A| on [τ_E', 5τ_E'] (τ_E' = 1/γ) and cross-checked against the stored residue.
    """
    if series.cut_part is None or series.pole_part is None:
        raise ValueError("Coefficient extraction needs a pole_cut series", series.engine)

    times = series.times
    lambda2 = params.lambda_**2
    e_a = excitation_energy(params, sd)

    window = (times >= 1.25 * tau_pow) & (times <= 4.0 * tau_pow)
    if window.sum() < 5:
        raise RegimeNotReachedError("Series does not cover the power-law window", tau_pow, times[-1])

    eta, scale, rotation_c, r_squared = _tail_fit(times[window], series.cut_part[window], e_a)
    if r_squared < FIT_R_SQUARED:
        raise RegimeNotReachedError("Cut contribution is not a power law in the window", r_squared)

    C = scale * e_a**eta / lambda2 * rotation_c

    pole_log = np.log(series.pole_part)
    decay, _, _ = _log_fit(times, pole_log.real)
    rotation, _, _ = _log_fit(times, np.unwrap(pole_log.imag))
    gamma = -2.0 * decay
    residue = complex(series.pole_part[0] * np.exp(0.5 * gamma * times[0] - 1j * rotation * times[0]))

    tau_E = 1.0 / gamma
    exponential = (times >= tau_E) & (times <= 5.0 * tau_E)
    if exponential.sum() >= 5:
        _, intercept, r_squared = _log_fit(times[exponential], np.log(np.abs(series.amplitude[exponential])))
        Z_mag = math.exp(intercept)
        if abs(Z_mag - abs(residue)) > Z_CROSS_CHECK * abs(residue):
            _logger.warning("Fitted |Z| = %.6f differs from the pole residue %.6f", Z_mag, abs(residue))
    else:
        _logger.warning("Series does not cover [tau_E, 5 tau_E], |Z| taken from the pole part")
        Z_mag = abs(residue)

    return AsymptoticCoefficients(
        Z_mag=Z_mag,
        zeta=-cmath.phase(residue),
        C=C,
        eta=eta,
        delta_E=-rotation,
        gamma=gamma,
        E_a=e_a,
        width=gamma / lambda2,
        lambda_=params.lambda_,
    )


def fit_zeno_time(series: SurvivalSeries, t_max: float | None = None) -> float:
    """τ_Z from the short-time law 1 - P ≈ t²/τ_Z², least squares over 0 < t ≤ t_max"""
    times = series.times
    mask = times > 0 if t_max is None else (times > 0) & (times <= t_max)
    if mask.sum() < 2:
        raise RegimeNotReachedError("Need at least two short-time points", t_max)

    t2 = times[mask] ** 2
    curvature = np.sum(t2 * (1.0 - series.probability[mask])) / np.sum(t2 * t2)
    if curvature <= 0:
        raise RegimeNotReachedError("Survival probability is not decreasing at short times", curvature)

    return float(1.0 / math.sqrt(curvature))
