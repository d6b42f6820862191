"""
Quadrature helpers shared by the spectral, self-energy and amplitude modules.

`quad` / `quad_complex` wrap scipy's QUADPACK and turn its failure codes into `QuadratureError`.
`geometric_panels` + `ray_transform` evaluate Fourier-type integrals on a ray rotated into the lower half plane,
where e^{-iEt} decays; geometric grading resolves every time scale 1/t with the same node set.
`stieltjes_transform` sums a panel rule against 1/(E - ω) for many E at once.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import QuadratureError

_logger = logging.getLogger(__name__)

EPSABS = 1e-12
EPSREL = 1e-10
LIMIT = 500
# nodes x times per chunk in ray_transform
CHUNK_SIZE = 2_000_000


def quad(
    fcn: Callable[[float], float],
    a: float,
    b: float,
    *,
    location: Any = None,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
    limit: int = LIMIT,
    **kwargs: Any,
) -> tuple[float, float]:
    """scipy.integrate.quad that fails loudly, returns `(value, error_estimate)`"""
    if "points" in kwargs:
        points = kwargs.pop("points")
        points = sorted({float(x) for x in points if a < x < b}) if math.isfinite(a) and math.isfinite(b) else []
        if points and "weight" not in kwargs:
            kwargs["points"] = points

    # full_output reports failures in the return value instead of through the (thread-unsafe) warnings machinery
    result = integrate.quad(fcn, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1, **kwargs)
    value, err = result[:2]

    if len(result) > 3:
        raise QuadratureError(
            f"Quadrature did not converge on [{a}, {b}]: {result[3]}", location=location, err_estimate=err
        )

    if not math.isfinite(value):
        raise QuadratureError(f"Quadrature returned {value} on [{a}, {b}]", location=location, err_estimate=err)

    return value, err


def quad_complex(
    fcn: Callable[[float], complex],
    a: float,
    b: float,
    **kwargs: Any,
) -> tuple[complex, float]:
    re, re_err = quad(lambda x: fcn(x).real, a, b, **kwargs)
    im, im_err = quad(lambda x: fcn(x).imag, a, b, **kwargs)
    return complex(re, im), math.hypot(re_err, im_err)


def fourier_quad(
    fcn: Callable[[float], float],
    a: float,
    b: float,
    t: float,
    **kwargs: Any,
) -> tuple[complex, float]:
    """
    ∫_a^b f(x) e^{-ixt} dx for real f with QUADPACK's oscillatory rules (QAWO, QAWF for b = inf).
    """
    if t == 0.0:
        value, err = quad(fcn, a, b, **kwargs)
        return complex(value), err

    # weighted rules take no break points, QAWF (b = inf) uses only the absolute tolerance
    kwargs.pop("points", None)

    cos_value, cos_err = quad(fcn, a, b, weight="cos", wvar=t, **kwargs)
    sin_value, sin_err = quad(fcn, a, b, weight="sin", wvar=t, **kwargs)
    return complex(cos_value, -sin_value), math.hypot(cos_err, sin_err)


def geometric_panels(
    lower: float,
    upper: float,
    *,
    ratio: float = 1.25,
    order: int = 16,
    breakpoints: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre rule on [0, upper]; panels grow geometrically from `lower`,
    [0, lower] is a single panel. Returns `(nodes, weights)`.
    """
    if not 0.0 < lower < upper:
        raise ValueError("Panel bounds must satisfy 0 < lower < upper", lower, upper)

    count = max(int(math.ceil(math.log(upper / lower) / math.log(ratio))), 1)
    edges = np.concatenate([[0.0], np.geomspace(lower, upper, count + 1)])
    extra = [x for x in breakpoints if lower < x < upper]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))

    base_nodes, base_weights = np.polynomial.legendre.leggauss(order)
    left = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    nodes = left + half * (base_nodes[None, :] + 1.0)
    weights = half * base_weights[None, :]
    return nodes.ravel(), weights.ravel()


def ray_transform(values: np.ndarray, points: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    """
    Σ_k weights_k · values_k · exp(-i · points_k · t) for every t, with complex `points` in the lower half plane.
    Summation order is fixed, so the result does not depend on how callers chunk their time grids.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    weighted = np.asarray(weights) * np.asarray(values)
    result = np.empty(times.shape, dtype=complex)

    step = max(CHUNK_SIZE // max(len(points), 1), 1)
    for start in range(0, len(times), step):
        chunk = times[start : start + step]
        phases = np.exp(-1j * np.outer(chunk, points))
        result[start : start + step] = phases @ weighted

    return result


def stieltjes_transform(measures: np.ndarray, points: np.ndarray, energies: np.ndarray) -> np.ndarray:
    """Σ_k measures_k / (E - points_k) for every E in the 1D array `energies`, chunked like `ray_transform`"""
    energies = np.asarray(energies, dtype=complex)
    result = np.empty(energies.shape, dtype=complex)

    step = max(CHUNK_SIZE // max(len(points), 1), 1)
    for start in range(0, len(energies), step):
        chunk = energies[start : start + step]
        result[start : start + step] = (1.0 / (chunk[:, None] - points[None, :])) @ measures

    return result
