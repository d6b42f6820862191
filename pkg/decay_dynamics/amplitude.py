"""
Survival amplitude A(t) (interaction picture, A(0) = 1) from independent engines:

- spectral: ∫ ρ(ω) e^{-i(ω-ω₀)t} dω over the real axis with QUADPACK's oscillatory rules
- pole_cut: Z·e^{-iE_pole·t} plus the branch-cut integral along a ray rotated into the lower half plane
- volterra: i dA/dt = λ² ∫₀^t σ(t-τ) A(τ) dτ by product integration
- vanhove_limit: exp(-iΣ(ω₀+i0⁺)·t̃) in rescaled time
- bromwich: G(E+iε) integrated along a line above the real axis, slow, meant for debugging
"""

from __future__ import annotations

import cmath
import functools
import logging
import math
from typing import Callable, Literal

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import interpolate

from .errors import (
    OutOfRegimeError,
    RefinementRequiredError,
    StableStateError,
    UnsupportedOperationError,
)
from .params import ModelParams
from .pole import PoleData, find_pole, has_bound_state
from .quadrature import fourier_quad, geometric_panels, quad, ray_transform
from .selfenergy import has_closed_form, sigma2, sigma2_array
from .spectral import (
    SpectralDensity,
    breakpoints,
    continued_density,
    delta_at,
    density,
    gamma_at,
    leaf_channels,
    second_moment,
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

Engine = Literal["spectral", "pole_cut", "volterra", "vanhove_limit", "bromwich"]
ScaleHint = Literal["linear", "log", "mixed"]

# real-axis quadrature runs up to SPECTRAL_UPPER * Λ, the rest is a QAWF tail
SPECTRAL_UPPER = 50.0
# resonance panels at p ± k·w
_RESONANCE_STEPS = (1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)

RAY_ANGLE = math.pi / 4
# ray panels are graded from RAY_LOWER / t_max up to RAY_UPPER * Λ
RAY_LOWER = 1e-10
RAY_UPPER = 1e3
RAY_ORDER = 16
# lower-order rule used for the pole_cut error estimate
RAY_CHECK_ORDER = 12

VOLTERRA_TOL = 1e-8
VOLTERRA_REFINEMENTS = 4
VOLTERRA_MAX_STEPS = 1 << 18
# order assumed for the extrapolated solution when turning the level difference into an error
RICHARDSON_ORDER = 3
REFINEMENT_SAFETY = 0.9
_SERIES_SWITCH = 0.1
_SERIES_TERMS = 12

NORMALIZATION_TOL = 1e-8
PROBABILITY_SLACK = 1e-9


class TimeGrid(BaseModel):
    model_config = _config

    points: np.ndarray
    scale_hint: ScaleHint = "linear"

    @field_validator("points", mode="before")
    @classmethod
    def _copy_points(cls, value) -> np.ndarray:
        points = np.array(value, dtype=float, ndmin=1)
        points.setflags(write=False)
        return points

    @model_validator(mode="after")
    def _check_points(self) -> TimeGrid:
        if self.points.ndim != 1 or len(self.points) == 0:
            raise ValueError("Time grid must be a non-empty 1D array")
        if not np.all(np.isfinite(self.points)) or np.any(self.points < 0):
            raise ValueError("Time grid must be finite and non-negative")
        if np.any(np.diff(self.points) <= 0):
            raise ValueError("Time grid must be strictly increasing")
        return self

    @classmethod
    def linear(cls: type[Self], tmin: float, tmax: float, count: int) -> Self:
        if tmin == tmax:
            return cls(points=[tmin], scale_hint="linear")
        return cls(points=np.linspace(tmin, tmax, count), scale_hint="linear")

    @classmethod
    def log(cls: type[Self], tmin: float, tmax: float, count: int) -> Self:
        if tmin <= 0:
            raise ValueError("Log grid needs tmin > 0", tmin)
        if tmin == tmax:
            return cls(points=[tmin], scale_hint="log")
        return cls(points=np.geomspace(tmin, tmax, count), scale_hint="log")

    @classmethod
    def mixed(cls: type[Self], tmin: float, tmax: float, count: int) -> Self:
        """Linear half from 0 and log half from tmin, merged"""
        linear = np.linspace(0.0, tmax, max(count // 2, 2))
        log = np.geomspace(tmin, tmax, max(count - count // 2, 2))
        return cls(points=np.unique(np.concatenate([linear, log])), scale_hint="mixed")

    @property
    def t_max(self) -> float:
        return float(self.points[-1])

    def __len__(self) -> int:
        return len(self.points)


class SurvivalSeries(BaseModel):
    model_config = _config

    grid: TimeGrid
    amplitude: np.ndarray
    engine: Engine
    err_estimate: np.ndarray
    pole_part: np.ndarray | None = None
    cut_part: np.ndarray | None = None

    @model_validator(mode="after")
    def _check_series(self) -> SurvivalSeries:
        size = len(self.grid)
        for name in ("amplitude", "err_estimate", "pole_part", "cut_part"):
            value = getattr(self, name)
            if value is not None and value.shape != (size,):
                raise ValueError(f"{name} does not match the grid", value.shape, size)

        if self.grid.points[0] == 0.0 and abs(self.amplitude[0] - 1.0) > NORMALIZATION_TOL:
            _logger.warning("%s engine: A(0) = %s deviates from 1", self.engine, self.amplitude[0])

        excess = np.max(self.probability) - 1.0
        if excess > PROBABILITY_SLACK:
            _logger.warning("%s engine: P(t) exceeds 1 by %.3e", self.engine, excess)

        return self

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    @property
    def probability(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2


def _constant_series(grid: TimeGrid, engine: Engine) -> SurvivalSeries:
    ones = np.ones(len(grid), dtype=complex)
    return SurvivalSeries(grid=grid, amplitude=ones, engine=engine, err_estimate=np.zeros(len(grid)))


def _require_decay(params: ModelParams, sd: SpectralDensity) -> None:
    if gamma_at(sd, params.omega0) == 0.0:
        raise StableStateError("Gamma(omega0) = 0, the initial state does not decay", params.omega0)
    if has_bound_state(params, sd):
        raise OutOfRegimeError("Propagator has a bound state below threshold", params.lambda_, params.omega0)


# region Real-axis engines


def _shift_function(params: ModelParams, sd: SpectralDensity) -> Callable[[float], float]:
    """Δ(ω) exactly when a closed form exists, otherwise a cubic spline over PV quadratures"""
    if has_closed_form(sd):
        return lambda w: sigma2(params, sd, w).value.real

    thr = threshold(sd)
    resonance = params.omega0 + params.lambda_**2 * delta_at(sd, params.omega0).delta
    width = max(params.lambda_**2 * gamma_at(sd, params.omega0) / 2.0, 1e-6 * sd.cutoff)
    nodes = np.unique(
        np.concatenate(
            [
                thr + sd.cutoff * np.geomspace(1e-6, RAY_UPPER, 300),
                resonance + width * np.linspace(-50.0, 50.0, 101),
                np.asarray(breakpoints(sd)),
            ]
        )
    )
    nodes = nodes[nodes > thr]
    values = np.array([delta_at(sd, x).delta for x in nodes])
    spline = interpolate.CubicSpline(nodes, values)
    moment, top = second_moment(sd), nodes[-1]
    _logger.debug("Tabulated the shift on %d nodes", len(nodes))

    def shift(w: float) -> float:
        if w > top:
            return moment / (w - thr)
        return float(spline(w))

    return shift


def _spectral_weight(params: ModelParams, sd: SpectralDensity) -> Callable[[float], float]:
    """ρ(ω) = (λ²Γ/2π) / [(ω - ω₀ - λ²Δ)² + (λ²Γ/2)²]"""
    lambda2 = params.lambda_**2
    shift = _shift_function(params, sd)

    def rho(w: float) -> float:
        half_width = 0.5 * lambda2 * gamma_at(sd, w)
        if half_width == 0.0:
            return 0.0
        detuning = w - params.omega0 - lambda2 * shift(w)
        return half_width / math.pi / (detuning * detuning + half_width * half_width)

    return rho


def _resonance_edges(params: ModelParams, sd: SpectralDensity, lower: float, upper: float, width: float) -> np.ndarray:
    centre = params.omega0 + params.lambda_**2 * sigma2(params, sd, params.omega0).value.real
    points = [lower, upper, threshold(sd), params.omega0, centre, *breakpoints(sd)]
    for step in _RESONANCE_STEPS:
        points += [centre - step * width, centre + step * width]
    points = np.unique(np.asarray(points, dtype=float))
    return points[(points >= lower) & (points <= upper)]


def _fourier_panels(fcn: Callable[[float], float], edges: np.ndarray, t: float) -> tuple[complex, float]:
    """∫ f(x) e^{-ixt} over [edges[0], ∞), panel by panel, the last panel is a QAWF tail"""
    total, error = 0j, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, err = fourier_quad(fcn, a, b, t, location=(a, b, t))
        total += value
        error += err
    value, err = fourier_quad(fcn, edges[-1], math.inf, t, location=(edges[-1], t))
    return total + value, error + err


def normalization(params: ModelParams, sd: SpectralDensity) -> float:
    """∫ ρ(ω) dω, equal to 1 when there is no bound state"""
    if params.lambda_ == 0.0:
        return 1.0

    rho = _spectral_weight(params, sd)
    width = 0.5 * params.lambda_**2 * gamma_at(sd, params.omega0)
    edges = _resonance_edges(params, sd, threshold(sd), SPECTRAL_UPPER * sd.cutoff, width)
    value, _ = _fourier_panels(rho, edges, 0.0)
    return value.real


def amplitude_spectral(params: ModelParams, sd: SpectralDensity, grid: TimeGrid) -> SurvivalSeries:
    """A(t) = ∫ ρ(ω) e^{-i(ω-ω₀)t} dω, with panels graded around the resonance"""
    if params.lambda_ == 0.0:
        return _constant_series(grid, "spectral")
    _require_decay(params, sd)

    rho = _spectral_weight(params, sd)
    width = 0.5 * params.lambda_**2 * gamma_at(sd, params.omega0)
    edges = _resonance_edges(params, sd, threshold(sd), SPECTRAL_UPPER * sd.cutoff, width)

    amplitude = np.empty(len(grid), dtype=complex)
    errors = np.empty(len(grid))
    for index, t in enumerate(grid.points):
        value, err = _fourier_panels(rho, edges, t)
        amplitude[index] = cmath.exp(1j * params.omega0 * t) * value
        errors[index] = err

    return SurvivalSeries(grid=grid, amplitude=amplitude, engine="spectral", err_estimate=errors)


def amplitude_bromwich(
    params: ModelParams,
    sd: SpectralDensity,
    grid: TimeGrid,
    epsilon: float | None = None,
) -> SurvivalSeries:
    """
    A(t) = e^{iω₀t}·(i/2π)·e^{εt} ∫ G(E+iε) e^{-iEt} dE with G = 1/(E - ω₀ - λ²Σ(E)), ε = 1/t unless given.
    A(0) is 1 by definition.
    """
    if params.lambda_ == 0.0:
        return _constant_series(grid, "bromwich")

    lambda2 = params.lambda_**2
    amplitude = np.ones(len(grid), dtype=complex)
    errors = np.zeros(len(grid))

    for index, t in enumerate(grid.points):
        if t == 0.0:
            continue

        eps = epsilon if epsilon is not None else 1.0 / t

        @functools.cache
        def propagator(E: float) -> complex:
            z = complex(E, eps)
            return 1.0 / (z - params.omega0 - lambda2 * sigma2(params, sd, z).value)

        width = max(0.5 * lambda2 * gamma_at(sd, params.omega0), eps)
        bound = SPECTRAL_UPPER * sd.cutoff
        edges = _resonance_edges(params, sd, -bound, bound, width)

        def real_part(E: float) -> float:
            return propagator(E).real

        def imag_part(E: float) -> float:
            return propagator(E).imag

        re_right, re_right_err = _fourier_panels(real_part, edges, t)
        im_right, im_right_err = _fourier_panels(imag_part, edges, t)
        # (-∞, -bound] is reflected onto [bound, ∞), where e^{+ixt} gives the conjugate for a real integrand
        re_left, re_left_err = fourier_quad(lambda x: real_part(-x), bound, math.inf, t, location=(-bound, t))
        im_left, im_left_err = fourier_quad(lambda x: imag_part(-x), bound, math.inf, t, location=(-bound, t))

        value = re_right + re_left.conjugate() + 1j * (im_right + im_left.conjugate())
        err = re_right_err + re_left_err + im_right_err + im_left_err

        prefactor = 1j / (2.0 * math.pi) * math.exp(eps * t) * cmath.exp(1j * params.omega0 * t)
        amplitude[index] = prefactor * value
        errors[index] = abs(prefactor) * err

    return SurvivalSeries(grid=grid, amplitude=amplitude, engine="bromwich", err_estimate=errors)


# endregion

# region Rotated-ray engines


def _ray_rule(
    sd: SpectralDensity,
    t_max: float,
    *,
    angle: float = RAY_ANGLE,
    order: int = RAY_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Nodes E_k and measures m_k with ∫ density(ω) g(ω) dω = Σ m_k g(E_k) for g analytic in the sector
    between each channel's threshold ray and the real axis. Every channel gets its own ray.
    """
    direction = cmath.exp(-1j * angle)
    nodes, measures = [], []

    for offset, leaf, weight in leaf_channels(sd):
        u, w = geometric_panels(RAY_LOWER / max(t_max, 1.0), RAY_UPPER * leaf.cutoff, order=order)
        z = u * direction
        nodes.append(offset + z)
        measures.append(weight * w * direction * continued_density(leaf, z))

    return np.concatenate(nodes), np.concatenate(measures)


def _cut_part(
    params: ModelParams,
    sd: SpectralDensity,
    times: np.ndarray,
    *,
    angle: float,
    order: int,
) -> np.ndarray:
    """λ² ∫ ρ_c G_I G_II e^{-i(E-ω₀)t} along the ray, G = 1/(E - ω₀ - λ²Σ)"""
    lambda2 = params.lambda_**2
    nodes, measures = _ray_rule(sd, float(times.max(initial=1.0)), angle=angle, order=order)

    first = sigma2_array(params, sd, nodes, "first")
    second = first - 2j * math.pi * continued_density(sd, nodes)
    propagators = 1.0 / (nodes - params.omega0 - lambda2 * first) / (nodes - params.omega0 - lambda2 * second)

    return lambda2 * ray_transform(propagators, nodes - params.omega0, measures, times)


def amplitude_pole_cut(
    params: ModelParams,
    sd: SpectralDensity,
    grid: TimeGrid,
    *,
    ray_angle: float = RAY_ANGLE,
    pole: PoleData | None = None,
) -> SurvivalSeries:
    """A(t) = Z·e^{-iE_pole·t} + A_cut(t) with the cut integral on a ray at angle `ray_angle` below the real axis"""
    if params.lambda_ == 0.0:
        return _constant_series(grid, "pole_cut")
    if sd.kind in ("channel_sum", "tabulated"):
        raise UnsupportedOperationError("Pole-cut engine needs a single-threshold analytic density", sd.kind)
    if not 0.0 < ray_angle < math.pi / 2:
        raise ValueError("Ray angle must lie in (0, pi/2)", ray_angle)
    _require_decay(params, sd)

    pole = pole if pole is not None else find_pole(params, sd)
    if cmath.phase(params.omega0 + pole.E_pole) <= -ray_angle:
        raise OutOfRegimeError("Pole lies outside the sector swept by the rotated ray", pole.E_pole, ray_angle)

    times = grid.points
    pole_part = pole.residue * np.exp(-1j * pole.E_pole * times)
    cut_part = _cut_part(params, sd, times, angle=ray_angle, order=RAY_ORDER)
    check = _cut_part(params, sd, times, angle=ray_angle, order=RAY_CHECK_ORDER)

    return SurvivalSeries(
        grid=grid,
        amplitude=pole_part + cut_part,
        engine="pole_cut",
        err_estimate=np.abs(cut_part - check),
        pole_part=pole_part,
        cut_part=cut_part,
    )


def _product_factors(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    ∫₀¹ e^{zξ}(1-ξ) dξ and ∫₀¹ e^{zξ} ξ dξ, with a Taylor series for small |z|.
    """
    small = np.abs(z) < _SERIES_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        em1 = np.expm1(z)
        left = (em1 - z) / (z * z)
        right = (em1 * (z - 1.0) + z) / (z * z)

    if np.any(small):
        zs = z[small]
        n = np.arange(_SERIES_TERMS)
        factorials = np.array([math.factorial(k + 2) for k in n], dtype=float)
        powers = zs[:, None] ** n[None, :]
        left[small] = powers @ (1.0 / factorials)
        right[small] = powers @ ((n + 1.0) / factorials)

    return left, right


class MemoryKernel(BaseModel):
    """
    σ(t) = -i e^{iω₀t} ∫ density(ω) e^{-iωt} dω, or the Markovian kernel C·δ(t) when `markov_constant` is set.
    """

    model_config = _config

    sd: SpectralDensity | None = None
    omega0: float = Field(ge=0.0)
    markov_constant: complex | None = None
    ray_angle: float = RAY_ANGLE

    @model_validator(mode="after")
    def _check_source(self) -> MemoryKernel:
        if (self.sd is None) == (self.markov_constant is None):
            raise ValueError("Memory kernel needs exactly one of density or Markovian constant")
        return self

    @classmethod
    def vanhove(cls: type[Self], params: ModelParams, sd: SpectralDensity) -> Self:
        """Markovian kernel with C = Σ(ω₀+i0⁺), the exact λ²t-limit of the evolution"""
        return cls(omega0=params.omega0, markov_constant=sigma2(params, sd, params.omega0).value)

    @property
    def is_markovian(self) -> bool:
        return self.markov_constant is not None

    @property
    def uses_ray(self) -> bool:
        return self.sd is not None and self.sd.is_continuable

    def _check_times(self, t: float | np.ndarray) -> np.ndarray:
        times = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(times < 0) or not np.all(np.isfinite(times)):
            raise ValueError("Memory kernel is defined for finite t >= 0 only", t)
        return times

    def evaluate(self, t: float | np.ndarray) -> complex | np.ndarray:
        if self.is_markovian:
            raise UnsupportedOperationError("Markovian kernel is C·delta(t) and is handled symbolically")
        times = self._check_times(t)

        if self.uses_ray:
            nodes, measures = _ray_rule(self.sd, times.max(initial=1.0), angle=self.ray_angle)
            values = -1j * ray_transform(np.ones_like(nodes), nodes - self.omega0, measures, times)
        else:
            lower, upper = self.sd.table_omega[0], self.sd.table_omega[-1]
            fcn = functools.partial(density, self.sd)
            transforms = np.array([fourier_quad(fcn, lower, upper, x)[0] for x in times])
            values = -1j * np.exp(1j * self.omega0 * times) * transforms

        return complex(values[0]) if np.ndim(t) == 0 else values

    def integrated(self, t: float | np.ndarray) -> complex | np.ndarray:
        """K(t) = ∫₀^t σ(s) ds = -∫ density(ω) (1 - e^{-i(ω-ω₀)t})/(ω - ω₀) dω"""
        times = self._check_times(t)

        if self.is_markovian:
            values = np.where(times > 0, self.markov_constant, 0j)
        elif self.uses_ray:
            nodes, measures = _ray_rule(self.sd, times.max(initial=1.0), angle=self.ray_angle)
            detuning = nodes - self.omega0
            weights = measures / detuning
            values = -(weights.sum() - ray_transform(np.ones_like(nodes), detuning, weights, times))
        else:
            values = np.array([self._integrated_table(x) for x in times])

        return complex(values[0]) if np.ndim(t) == 0 else values

    def _integrated_table(self, t: float) -> complex:
        lower, upper = self.sd.table_omega[0], self.sd.table_omega[-1]
        limit = 500 + int(t * (upper - lower))

        def real_part(w: float) -> float:
            a = w - self.omega0
            return 0.0 if a == 0 else -density(self.sd, w) * (1.0 - math.cos(a * t)) / a

        def imag_part(w: float) -> float:
            a = w - self.omega0
            return -density(self.sd, w) * (t if a == 0 else math.sin(a * t) / a)

        re, _ = quad(real_part, lower, upper, points=[self.omega0], limit=limit, location=t)
        im, _ = quad(imag_part, lower, upper, points=[self.omega0], limit=limit, location=t)
        return complex(re, im)

    def product_weights(self, step: float, count: int) -> tuple[np.ndarray, np.ndarray]:
        """
        α_m = ∫ K(u)(1-ξ) du and β_m = ∫ K(u) ξ du over [m·h, (m+1)·h], ξ = u/h - m, for m < count.
        """
        if self.is_markovian:
            value = 0.5 * step * self.markov_constant
            return np.full(count, value, dtype=complex), np.full(count, value, dtype=complex)

        if not self.uses_ray:
            samples = self.integrated(step * np.arange(count + 1))
            alpha = step * (samples[:-1] / 3.0 + samples[1:] / 6.0)
            beta = step * (samples[:-1] / 6.0 + samples[1:] / 3.0)
            return alpha, beta

        times = step * np.arange(count)
        nodes, measures = _ray_rule(self.sd, step * count, angle=self.ray_angle)
        detuning = nodes - self.omega0
        weights = measures / detuning
        left, right = _product_factors(-1j * detuning * step)

        alpha = -step * (0.5 * weights.sum() - ray_transform(left, detuning, weights, times))
        beta = -step * (0.5 * weights.sum() - ray_transform(right, detuning, weights, times))
        return alpha, beta


def memory_kernel(params: ModelParams, sd: SpectralDensity) -> MemoryKernel:
    return MemoryKernel(sd=sd, omega0=params.omega0)


def markov_kernel(constant: complex) -> MemoryKernel:
    return MemoryKernel(omega0=0.0, markov_constant=complex(constant))


def _volterra_solve(lambda2: float, alpha: np.ndarray, beta: np.ndarray, count: int) -> np.ndarray:
    """A_n(1 + iλ²α₀) = 1 - iλ²[Σ_{m=1}^{n-1} α_m A_{n-m} + Σ_{m=0}^{n-1} β_m A_{n-1-m}]"""
    amplitude = np.empty(count + 1, dtype=complex)
    amplitude[0] = 1.0
    diagonal = 1.0 + 1j * lambda2 * alpha[0]

    for n in range(1, count + 1):
        memory = np.dot(alpha[1:n], amplitude[n - 1 : 0 : -1]) + np.dot(beta[:n], amplitude[n - 1 :: -1])
        amplitude[n] = (1.0 - 1j * lambda2 * memory) / diagonal

    return amplitude


def _volterra_step(params: ModelParams, kernel: MemoryKernel, step: float | None) -> float:
    lambda2 = params.lambda_**2
    bounds = [] if step is None else [step]

    if kernel.is_markovian:
        rate = 2.0 * abs(kernel.markov_constant.imag) or abs(kernel.markov_constant)
        if rate > 0:
            bounds.append(1.0 / (lambda2 * rate) / 200.0)
    else:
        bounds.append(1.0 / (params.lambda_ * math.sqrt(second_moment(kernel.sd))) / 20.0)
        width = gamma_at(kernel.sd, kernel.omega0)
        if width > 0:
            bounds.append(1.0 / (lambda2 * width) / 200.0)

    return min(bounds)


def _richardson_solve(
    lambda2: float, kernel: MemoryKernel, h: float, quarter_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Solves on steps h, 2h and 4h. Returns the extrapolated solution on the 2h nodes and, on the 4h nodes,
    the error estimate of that solution from the distance to the 4h/2h extrapolation.
    """
    levels = [
        _volterra_solve(lambda2, *kernel.product_weights(k * h, 4 * quarter_count // k), 4 * quarter_count // k)
        for k in (1, 2, 4)
    ]
    fine, middle, coarse = levels
    upper = fine[::2] + (fine[::2] - middle) / 3.0
    lower = middle[::2] + (middle[::2] - coarse) / 3.0
    error = np.abs(upper[::2] - lower) / (2.0**RICHARDSON_ORDER - 1.0)
    return upper, error


def amplitude_volterra(
    params: ModelParams,
    kernel: MemoryKernel,
    grid: TimeGrid,
    *,
    step: float | None = None,
    tol: float = VOLTERRA_TOL,
    max_refinements: int = VOLTERRA_REFINEMENTS,
    closed_form_markov: bool = True,
) -> SurvivalSeries:
    """
    Solves i dA/dt = λ² ∫₀^t σ(t-τ) A(τ) dτ in its integrated form A(t) = 1 - iλ² ∫₀^t K(t-τ) A(τ) dτ.
    A is piecewise linear between nodes and the kernel is integrated exactly against it. Solves on h, 2h and 4h
    give two Richardson levels; their difference bounds the error of the returned (finer) level. The step is
    refined up to `max_refinements` times before `RefinementRequiredError`. The result is splined onto the grid.
    """
    lambda2 = params.lambda_**2
    if lambda2 == 0.0:
        return _constant_series(grid, "volterra")

    if kernel.is_markovian and closed_form_markov:
        amplitude = np.exp(-1j * lambda2 * kernel.markov_constant * grid.points)
        return SurvivalSeries(grid=grid, amplitude=amplitude, engine="volterra", err_estimate=np.zeros(len(grid)))

    if grid.t_max == 0.0:
        return _constant_series(grid, "volterra")

    h = _volterra_step(params, kernel, step)
    refinements = 0

    while True:
        quarter_count = max(int(math.ceil(grid.t_max / (4.0 * h))), 2)
        if 4 * quarter_count > VOLTERRA_MAX_STEPS:
            raise RefinementRequiredError(
                f"Volterra step {h:.4e} needs {4 * quarter_count} steps, more than {VOLTERRA_MAX_STEPS}",
                err_estimate=math.inf,
                suggested_step=h,
            )

        h = grid.t_max / (4 * quarter_count)
        _logger.debug("Volterra solve: h=%.4e, %d steps", h, 4 * quarter_count)
        extrapolated, error = _richardson_solve(lambda2, kernel, h, quarter_count)

        err_estimate = float(error.max())
        if err_estimate <= tol:
            break
        if not math.isfinite(err_estimate):
            raise RefinementRequiredError(
                f"Volterra solve diverged at step {h:.4e}", err_estimate=err_estimate, suggested_step=0.5 * h
            )

        suggested = h * min(REFINEMENT_SAFETY * (tol / err_estimate) ** (1.0 / RICHARDSON_ORDER), 0.5)
        if refinements >= max_refinements:
            raise RefinementRequiredError(
                f"Volterra step {h:.4e} too coarse, error estimate {err_estimate:.3e} > {tol:.3e}",
                err_estimate=err_estimate,
                suggested_step=suggested,
            )

        _logger.info("Volterra error estimate %.3e > %.3e, refining h=%.4e -> %.4e", err_estimate, tol, h, suggested)
        h = suggested
        refinements += 1

    nodes = 2 * h * np.arange(2 * quarter_count + 1)
    amplitude = interpolate.CubicSpline(nodes, extrapolated.real)(grid.points) + 1j * interpolate.CubicSpline(
        nodes, extrapolated.imag
    )(grid.points)
    errors = np.interp(grid.points, nodes[::2], error)

    return SurvivalSeries(grid=grid, amplitude=amplitude, engine="volterra", err_estimate=errors)


# endregion


def amplitude_vanhove_limit(params: ModelParams, sd: SpectralDensity, rescaled_grid: TimeGrid) -> SurvivalSeries:
    """Ã(t̃) = exp(-iΣ(ω₀+i0⁺)·t̃), the λ -> 0 limit at fixed t̃ = λ²t"""
    if gamma_at(sd, params.omega0) == 0.0:
        raise StableStateError("Gamma(omega0) = 0, there is no decay to take the limit of", params.omega0)

    sigma = sigma2(params, sd, params.omega0).value
    amplitude = np.exp(-1j * sigma * rescaled_grid.points)
    return SurvivalSeries(
        grid=rescaled_grid,
        amplitude=amplitude,
        engine="vanhove_limit",
        err_estimate=np.zeros(len(rescaled_grid)),
    )


def compute_series(
    params: ModelParams,
    sd: SpectralDensity,
    grid: TimeGrid,
    engine: Engine,
    **kwargs,
) -> SurvivalSeries:
    """Dispatch by engine name, the Van Hove limit takes `grid` in rescaled time"""
    match engine:
        case "spectral":
            return amplitude_spectral(params, sd, grid)
        case "pole_cut":
            return amplitude_pole_cut(params, sd, grid, **kwargs)
        case "volterra":
            return amplitude_volterra(params, memory_kernel(params, sd), grid, **kwargs)
        case "vanhove_limit":
            return amplitude_vanhove_limit(params, sd, grid)
        case "bromwich":
            return amplitude_bromwich(params, sd, grid, **kwargs)
        case _:
            raise ValueError("Unknown engine", engine)
