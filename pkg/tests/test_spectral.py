from __future__ import annotations

import math

import numpy as np
import pydantic
import pytest
from scipy import integrate

from decay_dynamics.errors import NumericalError, UnsupportedOperationError
from decay_dynamics.selfenergy import sigma2
from decay_dynamics.spectral import (
    SpectralDensity,
    continued_density,
    delta_at,
    density,
    estimate_threshold_exponent,
    gamma_at,
    leading_coefficient,
    second_moment,
    threshold,
    threshold_exponent,
)


def test_hydrogen_density(hydrogen_sd):
    x = np.array([-0.5, 0.0, 0.1, 1.0, 3.0])
    expected = np.where(x > 0, x * (1 + x * x) ** -4, 0.0)
    np.testing.assert_allclose(density(hydrogen_sd, x), expected, rtol=1e-14)
    assert gamma_at(hydrogen_sd, 1.0) == pytest.approx(2 * math.pi / 16)


def test_power_law_eta_two_is_hydrogen(hydrogen_sd):
    x = np.linspace(0.0, 5.0, 41)
    np.testing.assert_allclose(density(SpectralDensity.power_law(2.0), x), density(hydrogen_sd, x), rtol=1e-14)


def test_hydrogen_needs_eta_two():
    with pytest.raises(pydantic.ValidationError):
        SpectralDensity(kind="hydrogen2p1s", eta=3.0)


def test_second_moment(hydrogen_sd):
    assert second_moment(hydrogen_sd) == pytest.approx(1 / 6, rel=1e-12)
    # ∫ (1+x²)^-3 dx = 3π/16
    assert second_moment(SpectralDensity.power_law(1.0)) == pytest.approx(3 * math.pi / 16, rel=1e-12)
    assert second_moment(hydrogen_sd.scaled(2.0)) == pytest.approx(1 / 3, rel=1e-12)


def test_leading_coefficient(hydrogen_sd):
    assert leading_coefficient(hydrogen_sd) == 1.0
    sd = SpectralDensity.power_law(3.0, cutoff=2.0)
    assert leading_coefficient(sd) == pytest.approx(0.5)

    omega = 1e-4
    assert density(sd, omega) == pytest.approx(leading_coefficient(sd) * omega**2, rel=1e-6)


def test_channel_sum(hydrogen_sd):
    sd = SpectralDensity.channel_sum([(0.1, hydrogen_sd), (0.3, SpectralDensity.power_law(1.5))])
    assert threshold(sd) == 0.1
    assert threshold_exponent(sd) == 2.0
    assert sd.is_continuable
    assert density(sd, 0.05) == 0.0
    assert density(sd, 0.5) == pytest.approx(density(hydrogen_sd, 0.4) + density(SpectralDensity.power_law(1.5), 0.2))


def test_continued_density_matches_real_axis(hydrogen_sd):
    omega = np.array([0.01, 0.3, 2.0])
    np.testing.assert_allclose(continued_density(hydrogen_sd, omega.astype(complex)).real, density(hydrogen_sd, omega))

    sd = SpectralDensity.power_law(2.5)
    np.testing.assert_allclose(continued_density(sd, omega.astype(complex)).real, density(sd, omega), rtol=1e-12)


def test_boundary_value_at_omega0(hydrogen, hydrogen_sd):
    omega0 = hydrogen.omega0
    # P∫ f(x)/(x - c) dx from QUADPACK's Cauchy-weight rule, independent of delta_at
    core, _ = integrate.quad(lambda x: density(hydrogen_sd, x), 0.0, 50.0, weight="cauchy", wvar=omega0, limit=200)
    tail, _ = integrate.quad(lambda x: density(hydrogen_sd, x) / (omega0 - x), 50.0, np.inf)

    value = sigma2(hydrogen, hydrogen_sd, omega0).value
    assert value.real == pytest.approx(tail - core, abs=1e-7)
    assert value.real == pytest.approx(delta_at(hydrogen_sd, omega0).delta, abs=1e-7)
    assert value.imag == pytest.approx(-0.5 * gamma_at(hydrogen_sd, omega0), abs=1e-7)


@pytest.mark.parametrize("E", [-0.5, -0.05, 0.0, 0.01, 0.1, 0.25, 0.6, 1.0, 2.0, 3.0])
def test_delta_matches_closed_form(hydrogen, hydrogen_sd, E):
    # principal value against the real part of the closed-form boundary value
    assert delta_at(hydrogen_sd, E).delta == pytest.approx(sigma2(hydrogen, hydrogen_sd, E).value.real, abs=1e-7)


def test_delta_at_threshold(hydrogen_sd):
    # Δ(0) = -∫ (1+x²)^-4 dx
    value = delta_at(hydrogen_sd, 0.0)
    assert value.delta == pytest.approx(-5 * math.pi / 32, rel=1e-8)
    assert value.gamma == 0.0


def test_delta_above_threshold_is_finite(hydrogen_sd):
    below, above = delta_at(hydrogen_sd, 0.2 - 1e-6), delta_at(hydrogen_sd, 0.2 + 1e-6)
    assert above.delta == pytest.approx(below.delta, abs=1e-4)
    assert above.gamma == pytest.approx(2 * math.pi * density(hydrogen_sd, 0.2 + 1e-6))


def test_table(tmp_path, hydrogen_sd):
    omega = np.linspace(0.0, 0.5, 51)
    values = density(hydrogen_sd, omega)

    sd = SpectralDensity.from_table(omega, values)
    assert not sd.eta_declared
    assert sd.eta == pytest.approx(2.0, abs=0.05)
    assert density(sd, 0.25) == pytest.approx(density(hydrogen_sd, 0.25), rel=1e-3)
    assert density(sd, 0.7) == 0.0
    assert not sd.is_continuable

    with pytest.raises(UnsupportedOperationError):
        continued_density(sd, 0.1 + 0.1j)
    with pytest.raises(UnsupportedOperationError):
        leading_coefficient(sd)

    path = tmp_path / "density.csv"
    path.write_text("omega,density\n" + "".join(f"{w!r},{v!r}\n" for w, v in zip(omega.tolist(), values.tolist())))
    loaded = SpectralDensity.from_csv(path, eta=2.0)
    assert loaded.eta_declared
    assert loaded.table_omega == sd.table_omega
    assert loaded.table_values == sd.table_values

    bare = tmp_path / "bare.csv"
    bare.write_text("".join(f"{w!r},{v!r}\n" for w, v in zip(omega.tolist(), values.tolist())))
    assert SpectralDensity.from_csv(bare).table_omega == sd.table_omega


def test_table_validation():
    with pytest.raises(pydantic.ValidationError):
        SpectralDensity.from_table([0.0, 0.2, 0.1], [0.0, 1.0, 1.0], eta=2.0)
    with pytest.raises(pydantic.ValidationError):
        SpectralDensity.from_table([0.0, 0.1], [0.0, 1.0], eta=2.0)


def test_estimate_threshold_exponent():
    omega = np.geomspace(1e-4, 1e-2, 10)
    assert estimate_threshold_exponent(omega, 3.0 * omega**1.5) == pytest.approx(2.5, rel=1e-10)

    with pytest.raises(NumericalError):
        estimate_threshold_exponent([1e-3, 2e-3], [1.0, 2.0])
    with pytest.raises(NumericalError):
        estimate_threshold_exponent(omega, np.sin(1e3 * omega) + 1.5)
