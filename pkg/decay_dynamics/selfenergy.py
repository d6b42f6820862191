"""
Second-order self-energy Σ(E) = ∫ density(ω)/(E - ω) dω on both Riemann sheets.

Hydrogen uses the closed form Σ(E) = -iΛ·Q(-iE/Λ). With the principal log, the closed form is the first sheet
for Im E > 0 or Re E < 0 and the second sheet for Re E > 0, Im E < 0. Everything else follows from Schwarz
reflection of the first sheet and Σ_II = Σ_I - 2πi·ρ_c.
Other densities go through adaptive quadrature point by point, or, for arrays of analytic ones, a fixed panel
rule on a contour turned away from every E.
"""

from __future__ import annotations

import cmath
import functools
import logging
import math
from typing import Literal

import mpmath
import numpy as np
from numpy.polynomial import polynomial
from pydantic import BaseModel, ConfigDict, Field

from .errors import UnsupportedOperationError
from .params import ModelParams
from .quadrature import geometric_panels, quad_complex, stieltjes_transform
from .spectral import (
    PV_CUTOFF_FACTOR,
    SpectralDensity,
    breakpoints,
    continued_density,
    density,
    leaf_channels,
    threshold,
)

_logger = logging.getLogger(__name__)
_config = ConfigDict(
    validate_assignment=True,
    validate_default=True,
    validate_return=True,
    arbitrary_types_allowed=True,
    extra="forbid",
    frozen=True,
)

Sheet = Literal["first", "second"]
Method = Literal["closed_form", "quadrature"]

# both prefactors that appear for Σ(E) = c·Λ·Q(-iE/Λ); only -i reproduces the defining integral
SIGMA_SIGN_CANDIDATES: dict[str, complex] = {"minus_i": -1j, "plus_i": 1j}
SIGMA_SIGN = SIGMA_SIGN_CANDIDATES["minus_i"]

# numerator polynomial of Q, ascending powers, the -96·s·log(s) term is added separately
_Q_NUMERATOR = np.array(
    [
        -15j * math.pi,
        -88 + 48j * math.pi,
        -45j * math.pi,
        144,
        15j * math.pi,
        -72,
        -3j * math.pi,
        16,
    ],
    dtype=complex,
)
_Q_NUMERATOR_DERIVATIVE = polynomial.polyder(_Q_NUMERATOR)
Q_AT_ZERO = -5j * math.pi / 32

# Q is analytic at s = 1, but the closed form cancels catastrophically there
SERIES_RADIUS = 0.05
SERIES_TERMS = 16
_CAUCHY_RADIUS = 0.2
_CAUCHY_POINTS = 64
# s = -1 is a genuine pole of the continuation, evaluated with extra digits
MP_RADIUS = 0.05

# central difference step relative to max(|E|, ω₀), one Richardson step
DERIVATIVE_STEP = 1e-5

# array evaluation turns the ω contour by ±ROTATED_ANGLE about each threshold; panels run from
# ROTATED_LOWER·min|E - thr| to ROTATED_UPPER·max(Λ, |E - thr|)
ROTATED_ANGLE = math.pi / 4
ROTATED_LOWER = 1e-9
ROTATED_UPPER = 1e4
ROTATED_ORDER = 16


class SelfEnergyValue(BaseModel):
    model_config = _config

    E: complex
    value: complex
    sheet: Sheet
    method: Method
    err_estimate: float = Field(default=0.0, ge=0.0)


# region Q(s)


def _log_with_branch(s: np.ndarray, branch: int | None) -> np.ndarray:
    on_cut = (s.imag == 0) & (s.real < 0)
    if np.any(on_cut):
        if branch is None:
            raise ValueError("Q(s) evaluated on the branch cut of log(s) without a branch", s[on_cut])
        if branch not in (-1, 1):
            raise ValueError("Branch must be +1 or -1", branch)

    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(on_cut, np.log(np.abs(s)) + 1j * math.pi * (branch or 0), np.log(s))


def _q_raw(s: np.ndarray, log_s: np.ndarray) -> np.ndarray:
    numerator = polynomial.polyval(s, _Q_NUMERATOR) - 96.0 * s * log_s
    return numerator / (96.0 * (s * s - 1.0) ** 4)


def _q_raw_derivative(s: np.ndarray, log_s: np.ndarray) -> np.ndarray:
    numerator = polynomial.polyval(s, _Q_NUMERATOR) - 96.0 * s * log_s
    numerator_derivative = polynomial.polyval(s, _Q_NUMERATOR_DERIVATIVE) - 96.0 * (log_s + 1.0)
    return (numerator_derivative * (s * s - 1.0) - 8.0 * s * numerator) / (96.0 * (s * s - 1.0) ** 5)


@functools.cache
def _series_at_one() -> np.ndarray:
    """Taylor coefficients of Q around s = 1 from a Cauchy integral over a circle of radius 0.2"""
    angles = 2.0 * math.pi * np.arange(_CAUCHY_POINTS) / _CAUCHY_POINTS
    points = 1.0 + _CAUCHY_RADIUS * np.exp(1j * angles)
    samples = _q_raw(points, np.log(points))
    coefficients = np.fft.fft(samples)[:SERIES_TERMS] / _CAUCHY_POINTS
    return coefficients / _CAUCHY_RADIUS ** np.arange(SERIES_TERMS)


def _q_mp(s: complex, branch: int | None) -> tuple[complex, complex]:
    distance = max(abs(s + 1.0), 1e-300)
    dps = 30 + 4 * math.ceil(-math.log10(distance))

    with mpmath.workdps(dps):
        z = mpmath.mpc(s.real, s.imag)
        if s.imag == 0 and s.real < 0:
            log_z = mpmath.log(-z) + 1j * mpmath.pi * branch
        else:
            log_z = mpmath.log(z)

        numerator = mpmath.polyval([mpmath.mpc(x.real, x.imag) for x in _Q_NUMERATOR[::-1]], z) - 96 * z * log_z
        numerator_derivative = (
            mpmath.polyval([mpmath.mpc(x.real, x.imag) for x in _Q_NUMERATOR_DERIVATIVE[::-1]], z)
            - 96 * (log_z + 1)
        )
        base = z * z - 1
        value = numerator / (96 * base**4)
        derivative = (numerator_derivative * base - 8 * z * numerator) / (96 * base**5)
        return complex(value), complex(derivative)


def _q_evaluate(s: complex | np.ndarray, branch: int | None, derivative: bool) -> complex | np.ndarray:
    s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
    log_s = _log_with_branch(s_arr, branch)

    near_one = np.abs(s_arr - 1.0) < SERIES_RADIUS
    near_minus_one = np.abs(s_arr + 1.0) < MP_RADIUS
    at_zero = s_arr == 0

    with np.errstate(divide="ignore", invalid="ignore"):
        values = _q_raw_derivative(s_arr, log_s) if derivative else _q_raw(s_arr, log_s)

    if np.any(near_one):
        coefficients = _series_at_one()
        if derivative:
            coefficients = polynomial.polyder(coefficients)
        values[near_one] = polynomial.polyval(s_arr[near_one] - 1.0, coefficients)

    for index in np.flatnonzero(near_minus_one):
        if s_arr[index] == -1.0:
            raise ValueError("Q(s) has a pole at s = -1")
        values[index] = _q_mp(complex(s_arr[index]), branch)[1 if derivative else 0]

    if np.any(at_zero):
        if derivative:
            raise ValueError("Q'(s) diverges logarithmically at s = 0")
        values[at_zero] = Q_AT_ZERO

    return complex(values[0]) if np.ndim(s) == 0 else values


def q_closed(s: complex | np.ndarray, *, branch: int | None = None) -> complex | np.ndarray:
    """
    Closed form of Q(s) with the principal log.
    Points on the negative real axis need `branch=+1` (log from above the cut) or `branch=-1` (from below).
    """
    return _q_evaluate(s, branch, derivative=False)


def q_closed_derivative(s: complex | np.ndarray, *, branch: int | None = None) -> complex | np.ndarray:
    return _q_evaluate(s, branch, derivative=True)


def q_quadrature(s: complex) -> complex:
    """Q(s) = -i ∫₀^∞ x (1+x²)^-4 / (x - is) dx by adaptive quadrature"""
    s = complex(s)
    if s.real == 0 and s.imag <= 0:
        raise ValueError("Q(s) integrand is singular on the negative imaginary axis", s)

    value, _ = quad_complex(
        lambda x: x / (1.0 + x * x) ** 4 / (x - 1j * s),
        0.0,
        math.inf,
        location=s,
        epsabs=1e-14,
        epsrel=1e-12,
    )
    return -1j * value


def hydrogen_sigma_candidate(E: complex, prefactor: complex, cutoff: float = 1.0) -> complex:
    """Σ(E) = prefactor·Λ·Q(-iE/Λ) for Im E ≥ 0, used to pin the prefactor against quadrature"""
    return prefactor * cutoff * q_closed(-1j * complex(E) / cutoff)


# endregion

# region Σ(E)


def has_closed_form(sd: SpectralDensity) -> bool:
    """Hydrogen, and the η = 2 member of the power-law family which has the same shape"""
    return sd.kind == "hydrogen2p1s" or (sd.kind == "power_law_cutoff" and sd.eta == 2.0)


def _as_energy(E: float | complex) -> complex:
    # real input means E + i0⁺
    E = complex(E)
    return complex(E.real, 0.0) if E.imag == 0 else E


def _hydrogen_sigma(sd: SpectralDensity, E: np.ndarray, sheet: Sheet, derivative: bool = False) -> np.ndarray:
    cutoff = sd.cutoff
    lower = E.imag < 0
    upper_E = np.where(lower, np.conj(E), E)
    s = -1j * upper_E / cutoff

    if derivative:
        first = -q_closed_derivative(s)
    else:
        first = -1j * cutoff * q_closed(s)
    first = np.where(lower, np.conj(first), first)

    if sheet == "first":
        return sd.scale * first

    direct = (E.real > 0) & (E.imag <= 0)
    second = np.empty_like(E)

    if np.any(direct):
        s_direct = -1j * E[direct] / cutoff
        if derivative:
            second[direct] = -q_closed_derivative(s_direct)
        else:
            second[direct] = -1j * cutoff * q_closed(s_direct)

    if np.any(~direct):
        x = E[~direct] / cutoff
        if derivative:
            jump = (1.0 - 7.0 * x * x) / (1.0 + x * x) ** 5
        else:
            jump = cutoff * x / (1.0 + x * x) ** 4
        second[~direct] = first[~direct] - 2j * math.pi * jump

    return sd.scale * second


def _first_sheet_quadrature(sd: SpectralDensity, E: complex) -> tuple[complex, float]:
    """Subtraction at Re E keeps the integrand bounded as Im E -> 0, the real-axis limit is the Sokhotski split"""
    thr = threshold(sd)
    e_max = PV_CUTOFF_FACTOR * sd.cutoff + max(E.real, 0.0)
    points = breakpoints(sd)

    def plain(w: float) -> complex:
        return density(sd, w) / (E - w)

    if thr < E.real < e_max:
        f_r = density(sd, E.real)

        def subtracted(w: float) -> complex:
            if w == E.real and E.imag == 0:
                return 0j
            return (density(sd, w) - f_r) / (E - w)

        value, err = quad_complex(subtracted, thr, e_max, points=[E.real, *points], location=E)
        # log(E - ω) with E = x + i0⁺ picks up +iπ beyond ω = x, which gives -iπ·f(x)
        value += f_r * (cmath.log(E - thr) - cmath.log(E - e_max))
    else:
        value, err = quad_complex(plain, thr, e_max, points=points, location=E)

    tail, tail_err = quad_complex(plain, e_max, math.inf, location=E)
    return value + tail, err + tail_err


def sigma2_via_transform(
    params: ModelParams, sd: SpectralDensity, E: float | complex, sheet: Sheet = "first"
) -> SelfEnergyValue:
    """Quadrature path for any density, also usable for hydrogen as an independent check of the closed form"""
    E = _as_energy(E)
    value, err = _first_sheet_quadrature(sd, E)

    if sheet == "second":
        if not sd.is_continuable:
            raise UnsupportedOperationError("Second sheet needs an analytic density", sd.kind)
        # on the continuum E - i0⁺ of the second sheet is the continuation of E + i0⁺, nothing to add
        if E.imag != 0 or E.real <= threshold(sd):
            value = value - 2j * math.pi * continued_density(sd, E)

    return SelfEnergyValue(E=E, value=value, sheet=sheet, method="quadrature", err_estimate=err)


def sigma2(params: ModelParams, sd: SpectralDensity, E: float | complex, sheet: Sheet = "first") -> SelfEnergyValue:
    """
    Σ(E) on the requested sheet. Real E means the boundary value from above, Σ(E + i0⁺) = Δ(E) - iΓ(E)/2.
    """
    if not has_closed_form(sd):
        return sigma2_via_transform(params, sd, E, sheet)

    E = _as_energy(E)
    value = _hydrogen_sigma(sd, np.array([E]), sheet)[0]
    return SelfEnergyValue(E=E, value=complex(value), sheet=sheet, method="closed_form")


def _first_sheet_rotated(sd: SpectralDensity, E: np.ndarray) -> np.ndarray:
    """
    First sheet for many E at once. Each channel's contour is turned onto thr + r·e^{±iθ}, upward for Im E < 0
    and downward otherwise (real E is E + i0⁺), so 1/(E - ω) stays bounded by |E - thr|·sin θ and one panel rule
    serves every E. None of the E may sit exactly on a threshold.
    """
    values = np.zeros(E.shape, dtype=complex)

    for offset, leaf, weight in leaf_channels(sd):
        z = E - offset
        distance = np.abs(z)
        lower = ROTATED_LOWER * min(distance.min(), leaf.cutoff)
        upper = ROTATED_UPPER * max(leaf.cutoff, distance.max())
        r, w = geometric_panels(lower, upper, order=ROTATED_ORDER)

        for sign, side in ((1.0, z.imag < 0), (-1.0, z.imag >= 0)):
            if not np.any(side):
                continue
            direction = cmath.exp(1j * sign * ROTATED_ANGLE)
            nodes = r * direction
            measures = weight * w * direction * continued_density(leaf, nodes)
            values[side] += stieltjes_transform(measures, nodes, z[side])

    return values


def sigma2_array(params: ModelParams, sd: SpectralDensity, E: np.ndarray, sheet: Sheet = "first") -> np.ndarray:
    """
    Vectorised `sigma2`. Analytic densities without a closed form use a rotated-contour panel rule,
    tabulated ones fall back to one adaptive quadrature per point.
    """
    E = np.asarray(E, dtype=complex)

    if has_closed_form(sd):
        return _hydrogen_sigma(sd, E.ravel(), sheet).reshape(E.shape)

    if not sd.is_continuable:
        values = [sigma2_via_transform(params, sd, complex(x), sheet).value for x in E.ravel()]
        return np.asarray(values, dtype=complex).reshape(E.shape)

    flat = E.ravel()
    on_threshold = np.isin(flat, [offset for offset, _, _ in leaf_channels(sd)])
    values = np.empty(flat.shape, dtype=complex)
    if np.any(~on_threshold):
        values[~on_threshold] = _first_sheet_rotated(sd, flat[~on_threshold])
    for index in np.flatnonzero(on_threshold):
        values[index] = _first_sheet_quadrature(sd, complex(flat[index]))[0]

    if sheet == "second":
        # same rule as `sigma2_via_transform`: E on the continuum itself stays on the upper rim
        jump = (flat.imag != 0) | (flat.real <= threshold(sd))
        if np.any(jump):
            values[jump] -= 2j * math.pi * continued_density(sd, flat[jump])

    return values.reshape(E.shape)


def sigma2_derivative(params: ModelParams, sd: SpectralDensity, E: float | complex, sheet: Sheet = "first") -> complex:
    """dΣ/dE, analytic for hydrogen, central difference with one Richardson step otherwise"""
    E = _as_energy(E)

    if has_closed_form(sd):
        return complex(_hydrogen_sigma(sd, np.array([E]), sheet, derivative=True)[0])

    h = DERIVATIVE_STEP * max(abs(E), params.omega0)

    def central(step: float) -> complex:
        plus = sigma2_via_transform(params, sd, E + step, sheet).value
        minus = sigma2_via_transform(params, sd, E - step, sheet).value
        return (plus - minus) / (2.0 * step)

    coarse, fine = central(h), central(0.5 * h)
    return (4.0 * fine - coarse) / 3.0


# endregion
