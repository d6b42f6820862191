"""
Second-sheet pole of the propagator 1/(E - ω₀ - λ²Σ(E)).

Energies here are measured from ω₀: the pole solves D(E) = E - λ²Σ_II(ω₀ + E) = 0 and E_pole = ΔE - iγ/2.
The residue Z = 1/(1 - λ²Σ_II'(ω₀ + E_pole)) and ζ = -Arg Z, so the pole part of the amplitude is
|Z|·e^{-iζ}·e^{-iE_pole·t}.
"""

from __future__ import annotations

import cmath
import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy import optimize

from .errors import ConfigError, ConvergenceError, OutOfRegimeError, UnsupportedOperationError
from .params import ModelParams
from .selfenergy import sigma2, sigma2_array, sigma2_derivative
from .spectral import SpectralDensity, delta_at, gamma_at, threshold, threshold_exponent

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
)

MAX_ITERATIONS = 50
TOLERANCE = 1e-12
DAMPING = 0.5
MAX_HALVINGS = 30


class PoleData(BaseModel):
    model_config = _config

    E_pole: complex
    delta_E: float
    gamma: float = Field(ge=0.0)
    residue: complex
    zeta: float
    iterations: int = Field(ge=0)
    tolerance_achieved: float = Field(ge=0.0)
    degenerate: bool = False

    @computed_field
    @property
    def z_magnitude(self) -> float:
        return abs(self.residue)

    @classmethod
    def from_pole(
        cls, E_pole: complex, residue: complex, *, iterations: int, residual: float, degenerate: bool = False
    ) -> PoleData:
        return cls(
            E_pole=E_pole,
            delta_E=E_pole.real,
            # rounding can leave a tiny positive imaginary part on (almost) real poles
            gamma=max(-2.0 * E_pole.imag, 0.0),
            residue=residue,
            zeta=-cmath.phase(residue),
            iterations=iterations,
            tolerance_achieved=residual,
            degenerate=degenerate,
        )


def perturbative_pole(params: ModelParams, sd: SpectralDensity, order: Literal[2, 4] = 4) -> complex:
    """λ²Σ(ω₀) (+ λ⁴Σ'(ω₀)Σ(ω₀) at order 4), Σ taken at ω₀ + i0⁺"""
    if order not in (2, 4):
        raise ConfigError("Perturbative pole is available at order 2 or 4", order)

    lambda2 = params.lambda_**2
    if lambda2 == 0.0:
        return 0j

    sigma = sigma2(params, sd, params.omega0).value
    if order == 2:
        return lambda2 * sigma

    return lambda2 * sigma + lambda2**2 * sigma2_derivative(params, sd, params.omega0) * sigma


def has_bound_state(params: ModelParams, sd: SpectralDensity) -> bool:
    """True when the propagator has a real pole below the threshold, i.e. ω₀ + λ²Σ(thr) < thr"""
    thr = threshold(sd)
    if threshold_exponent(sd) <= 1.0 and params.lambda_ > 0:
        # Σ(thr) diverges to -inf
        return True

    sigma_thr = sigma2(params, sd, thr).value.real
    return params.omega0 + params.lambda_**2 * sigma_thr < thr


def _degenerate_pole(params: ModelParams, sd: SpectralDensity) -> PoleData:
    """Γ(ω₀) = 0: the pole is real and solves E = λ²Δ(ω₀ + E)"""
    lambda2 = params.lambda_**2

    def equation(E: float) -> float:
        return E - lambda2 * delta_at(sd, params.omega0 + E).delta

    half_width = max(4.0 * lambda2 * abs(delta_at(sd, params.omega0).delta), 1e-14)
    for _ in range(60):
        if equation(-half_width) < 0.0 < equation(half_width):
            break
        half_width *= 2.0
    else:
        raise ConvergenceError("No sign change found for the real pole", iterations=60, residual=math.nan)

    E_pole, result = optimize.brentq(equation, -half_width, half_width, xtol=1e-15, full_output=True)
    slope = sigma2_derivative(params, sd, params.omega0 + E_pole).real
    residue = 1.0 / (1.0 - lambda2 * slope)
    _logger.info("Degenerate pole: Gamma(omega0) = 0, real pole at %.6e", E_pole)
    return PoleData.from_pole(
        complex(E_pole, 0.0),
        complex(residue),
        iterations=result.iterations,
        residual=abs(equation(E_pole)),
        degenerate=True,
    )


def find_pole(
    params: ModelParams,
    sd: SpectralDensity,
    *,
    max_iterations: int = MAX_ITERATIONS,
    tol: float = TOLERANCE,
) -> PoleData:
    """
    Damped Newton iteration on D(E) = E - λ²Σ_II(ω₀ + E), seeded with the order-4 perturbative pole.
    """
    lambda2 = params.lambda_**2
    if lambda2 == 0.0:
        degenerate = gamma_at(sd, params.omega0) == 0.0
        return PoleData.from_pole(0j, 1 + 0j, iterations=0, residual=0.0, degenerate=degenerate)

    if gamma_at(sd, params.omega0) == 0.0:
        return _degenerate_pole(params, sd)

    if not sd.is_continuable:
        raise UnsupportedOperationError("Pole search needs the second sheet, which is unavailable", sd.kind)

    def mismatch(E: complex) -> complex:
        return E - lambda2 * sigma2(params, sd, params.omega0 + E, "second").value

    E = perturbative_pole(params, sd, order=4)
    residual = mismatch(E)
    iterations = 0

    while abs(residual) >= tol * max(lambda2 * sd.cutoff, abs(E)):
        if iterations >= max_iterations:
            raise ConvergenceError("Pole search did not converge", iterations=iterations, residual=abs(residual))

        slope = 1.0 - lambda2 * sigma2_derivative(params, sd, params.omega0 + E, "second")
        step = residual / slope
        candidate = E - step
        candidate_residual = mismatch(candidate)

        halvings = 0
        while abs(candidate_residual) > abs(residual) and halvings < MAX_HALVINGS:
            step *= DAMPING
            candidate = E - step
            candidate_residual = mismatch(candidate)
            halvings += 1

        E, residual = candidate, candidate_residual
        iterations += 1
        _logger.debug("Newton step %d: E=%s |D|=%.3e halvings=%d", iterations, E, abs(residual), halvings)

    if abs(E) >= params.omega0:
        raise OutOfRegimeError("Pole left the disk |E| < omega0 where the expansion around omega0 holds", E)

    residue = 1.0 / (1.0 - lambda2 * sigma2_derivative(params, sd, params.omega0 + E, "second"))
    return PoleData.from_pole(complex(E), complex(residue), iterations=iterations, residual=abs(residual))


def residue_phase(pole: PoleData) -> tuple[float, float]:
    """(|Z|, ζ) with A_pole(t) = |Z|·e^{-iζ}·e^{-iE_pole·t}"""
    return pole.z_magnitude, pole.zeta


def grid_minimum(
    params: ModelParams,
    sd: SpectralDensity,
    *,
    points: int = 400,
    re_bounds: tuple[float, float] | None = None,
    im_bounds: tuple[float, float] | None = None,
) -> tuple[complex, float]:
    """
    Brute-force minimiser of |D(E)| over a second-sheet grid, returns the minimiser and the grid spacing.
    The default window is built around the order-2 pole.
    """
    seed = perturbative_pole(params, sd, order=2)
    if re_bounds is None:
        re_bounds = (seed.real - 0.5 * abs(seed.real), seed.real + 0.5 * abs(seed.real))
    if im_bounds is None:
        im_bounds = (-3.0 * abs(seed.imag), 0.0)

    re_axis = np.linspace(*re_bounds, points)
    im_axis = np.linspace(*im_bounds, points)
    E = re_axis[None, :] + 1j * im_axis[:, None]

    values = np.abs(E - params.lambda_**2 * sigma2_array(params, sd, params.omega0 + E, "second"))
    row, column = np.unravel_index(np.argmin(values), values.shape)
    spacing = max(re_axis[1] - re_axis[0], im_axis[1] - im_axis[0])
    return complex(E[row, column]), float(spacing)
