from __future__ import annotations

import math

import numpy as np
import pytest

from decay_dynamics.errors import ConfigError, ConvergenceError, UnsupportedOperationError
from decay_dynamics.params import ModelParams, energy_to_si
from decay_dynamics.pole import find_pole, grid_minimum, has_bound_state, perturbative_pole, residue_phase
from decay_dynamics.selfenergy import sigma2
from decay_dynamics.spectral import SpectralDensity, delta_at, density, gamma_at


def test_no_coupling(hydrogen, hydrogen_sd):
    pole = find_pole(hydrogen.with_lambda(0.0), hydrogen_sd)
    assert pole.E_pole == 0
    assert pole.residue == 1
    assert pole.iterations == 0
    assert not pole.degenerate


def test_hydrogen_pole(hydrogen, hydrogen_sd):
    pole = find_pole(hydrogen, hydrogen_sd)
    lambda2 = hydrogen.lambda_**2

    assert not pole.degenerate
    assert energy_to_si(hydrogen, pole.gamma) == pytest.approx(6.27e8, rel=2e-3)
    assert pole.gamma == pytest.approx(lambda2 * gamma_at(hydrogen_sd, hydrogen.omega0), rel=1e-3)

    # the pole solves E = λ²Σ_II(ω₀ + E)
    mismatch = pole.E_pole - lambda2 * sigma2(hydrogen, hydrogen_sd, hydrogen.omega0 + pole.E_pole, "second").value
    assert abs(mismatch) < 1e-12 * lambda2


def test_hydrogen_residue(hydrogen, hydrogen_sd):
    pole = find_pole(hydrogen, hydrogen_sd)
    lambda2 = hydrogen.lambda_**2
    z_magnitude, zeta = residue_phase(pole)

    assert z_magnitude == pole.z_magnitude
    assert (1.0 - z_magnitude) / lambda2 == pytest.approx(4.39, abs=0.05)
    assert zeta == pytest.approx(math.pi * lambda2, rel=1e-2)


def test_perturbative_order(hydrogen, hydrogen_sd):
    lambdas = np.array([1e-2, 3e-3, 1e-3])
    differences = []
    for lambda_ in lambdas:
        params = hydrogen.with_lambda(lambda_)
        differences.append(abs(find_pole(params, hydrogen_sd).E_pole - perturbative_pole(params, hydrogen_sd, order=4)))

    slope, _ = np.polyfit(np.log(lambdas), np.log(differences), 1)
    assert slope >= 5.5


def test_perturbative_pole(desk, desk_sd):
    lambda2 = desk.lambda_**2
    expected = lambda2 * sigma2(desk, desk_sd, desk.omega0).value
    assert perturbative_pole(desk, desk_sd, order=2) == pytest.approx(expected)
    assert perturbative_pole(desk.with_lambda(0.0), desk_sd) == 0

    with pytest.raises(ConfigError):
        perturbative_pole(desk, desk_sd, order=3)


def test_grid_minimum_agrees(desk, desk_sd):
    pole = find_pole(desk, desk_sd)
    minimum, spacing = grid_minimum(desk, desk_sd, points=200)
    assert abs(minimum - pole.E_pole) <= 2 * spacing


def test_grid_minimum_hydrogen_desk(hydrogen_desk, hydrogen_sd):
    pole = find_pole(hydrogen_desk, hydrogen_sd)
    minimum, spacing = grid_minimum(hydrogen_desk, hydrogen_sd, points=400)
    assert abs(minimum - pole.E_pole) <= 2 * spacing


def test_residue_deficit_quadratic(desk_sd):
    # ω₀ close to threshold, where dΔ/dE is clearly negative and 1 - |Z| ≈ -λ²·dΔ/dE
    lambdas = np.array([0.1, 0.05, 0.02])
    deficits = [1.0 - find_pole(ModelParams(lambda_=lam, omega0=0.05), desk_sd).z_magnitude for lam in lambdas]
    assert all(deficit > 0 for deficit in deficits)
    slope, _ = np.polyfit(np.log(lambdas), np.log(deficits), 1)
    assert slope == pytest.approx(2.0, abs=0.2)


def test_bound_state(hydrogen, hydrogen_sd):
    assert not has_bound_state(hydrogen, hydrogen_sd)
    assert has_bound_state(ModelParams(lambda_=0.3, omega0=0.01), hydrogen_sd)
    assert has_bound_state(ModelParams(lambda_=0.01, omega0=0.25), SpectralDensity.power_law(0.5))


def test_degenerate_pole(desk, closed_channel_sd):
    pole = find_pole(desk, closed_channel_sd)
    lambda2 = desk.lambda_**2

    assert pole.degenerate
    assert pole.gamma == 0.0
    assert pole.E_pole.imag == 0.0
    shift = delta_at(closed_channel_sd, desk.omega0 + pole.E_pole.real).delta
    assert pole.E_pole.real == pytest.approx(lambda2 * shift)
    assert 0.0 < pole.residue.real < 1.0


def test_tabulated_density(desk, hydrogen_sd):
    omega = np.linspace(0.0, 0.9, 91)
    sd = SpectralDensity.from_table(omega, density(hydrogen_sd, omega), eta=2.0)
    with pytest.raises(UnsupportedOperationError):
        find_pole(desk, sd)


def test_iteration_limit(desk, desk_sd):
    with pytest.raises(ConvergenceError) as excinfo:
        find_pole(desk, desk_sd, max_iterations=0)
    assert excinfo.value.iterations == 0
