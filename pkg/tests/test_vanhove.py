from __future__ import annotations

import math

import numpy as np
import pydantic
import pytest

from decay_dynamics.asymptotics import coefficients, long_time_P
from decay_dynamics.errors import ConfigError, StableStateError
from decay_dynamics.spectral import gamma_at
from decay_dynamics.vanhove import (
    DEVIATION_GRID,
    ScalingReport,
    SweepPoint,
    assemble_report,
    check_lambdas,
    convergence_to_exponential,
    deviation_grid,
    rescale_time,
    rescaled_long_time_P,
    rescaled_propagator_deviation,
    sweep,
    sweep_point,
)

LAMBDAS = [3e-2, 1e-2, 3e-3, 1e-3]


def test_rescale_time(desk):
    assert rescale_time(desk, 0.5) == pytest.approx(200.0)
    np.testing.assert_allclose(rescale_time(desk, np.array([0.0, 1.0])), [0.0, 400.0])

    with pytest.raises(ConfigError):
        rescale_time(desk.with_lambda(0.0), 1.0)
    with pytest.raises(ValueError):
        rescale_time(desk, -1.0)


@pytest.mark.parametrize("lambdas", [[], [1e-2, 3e-2], [1e-2, 1e-2], [0.2, 1e-2], [1e-2, 0.0]])
def test_check_lambdas(lambdas):
    with pytest.raises(ConfigError):
        check_lambdas(lambdas)


def test_deviation_grid(hydrogen, hydrogen_sd, desk, closed_channel_sd):
    grid = deviation_grid(hydrogen_sd, hydrogen.omega0, count=50)
    tau_E_tilde = 1.0 / gamma_at(hydrogen_sd, hydrogen.omega0)
    assert len(grid) == 50
    assert grid[0] == pytest.approx(DEVIATION_GRID[0] * tau_E_tilde)
    assert grid[-1] == pytest.approx(DEVIATION_GRID[1] * tau_E_tilde)

    with pytest.raises(StableStateError):
        deviation_grid(closed_channel_sd, desk.omega0)


def test_failed_point_is_recorded(desk, closed_channel_sd):
    point = sweep_point(desk, closed_channel_sd, 1e-2)
    assert point.lambda_ == 1e-2
    assert "StableStateError" in point.error
    assert point.deviation is None


def test_report_order():
    points = [SweepPoint(lambda_=1e-3), SweepPoint(lambda_=1e-2)]
    with pytest.raises(pydantic.ValidationError):
        ScalingReport(points=points, fits={})


def test_report_skips_failures():
    points = [
        SweepPoint(lambda_=1e-2, tau_Z_tilde=2e-2, x=100.0),
        SweepPoint(lambda_=1e-3, error="StableStateError()"),
    ]
    report = assemble_report(points, eta=2.0)
    assert report.fits == {}
    assert report.lambdas == [1e-2, 1e-3]


def test_two_point_fit():
    points = [
        SweepPoint(lambda_=1e-2, tau_Z_tilde=2e-2, x=100.0),
        SweepPoint(lambda_=1e-3, tau_Z_tilde=2e-3, x=130.0),
    ]
    report = assemble_report(points, eta=2.0)
    assert report.fits["tau_Z"].slope == pytest.approx(2.0)
    assert report.fits["tau_pow"].slope == pytest.approx(30.0 / math.log(10.0))
    assert math.isnan(report.fits["tau_pow"].slope_stderr)
    assert "cross_amplitude" not in report.fits


@pytest.mark.slow
def test_hydrogen_sweep(hydrogen, hydrogen_sd):
    report = sweep(hydrogen, hydrogen_sd, LAMBDAS)
    assert all(x.error is None for x in report.points)

    tau_E_tilde = [x.tau_E_tilde for x in report.points]
    np.testing.assert_allclose(tau_E_tilde, tau_E_tilde[0], rtol=1e-10)
    np.testing.assert_allclose([x.tau_Z_tilde / x.lambda_ for x in report.points], math.sqrt(6), rtol=1e-10)

    assert report.fits["tau_Z"].slope == pytest.approx(math.sqrt(6), rel=1e-10)
    assert report.fits["tau_pow_corrected"].slope == pytest.approx(12.0, abs=0.5)
    assert 5.4 <= report.fits["cross_amplitude"].slope <= 6.6


def test_hydrogen_convergence(hydrogen, hydrogen_sd):
    report = convergence_to_exponential(hydrogen, hydrogen_sd, LAMBDAS[:3])
    assert report.monotone
    assert report.order >= 0.8
    assert len(report.deviation_at) == 3


def test_markov_convergence_is_exact(hydrogen, hydrogen_sd):
    report = convergence_to_exponential(hydrogen, hydrogen_sd, LAMBDAS, engine="vanhove_limit")
    assert max(report.deviations) <= 1e-12


def test_sweep_with_markov_engine(hydrogen, hydrogen_sd):
    report = sweep(hydrogen, hydrogen_sd, LAMBDAS[:2], engine="vanhove_limit")
    assert all(x.cross_amplitude is None for x in report.points)
    assert all(x.deviation <= 1e-12 for x in report.points)
    assert "cross_amplitude" not in report.fits


def test_rescaled_propagator(hydrogen, hydrogen_sd):
    energies = [0.01j, 0.005 + 0.01j, -0.005 + 0.02j]
    deviations = rescaled_propagator_deviation(hydrogen, hydrogen_sd, LAMBDAS, energies)
    assert deviations.shape == (4, 3)
    assert np.all(np.diff(deviations, axis=0) < 0)

    with pytest.raises(ConfigError):
        rescaled_propagator_deviation(hydrogen, hydrogen_sd, LAMBDAS, [0.01])


def test_rescaled_long_time_law(desk, desk_sd):
    coeffs = coefficients(desk, desk_sd)
    t_tilde = np.array([1.0, 2.0, 5.0])
    np.testing.assert_allclose(rescaled_long_time_P(t_tilde, coeffs), long_time_P(t_tilde / 0.0025, coeffs))
