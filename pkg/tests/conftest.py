from __future__ import annotations

import pytest

from decay_dynamics.params import ModelParams, hydrogen_params
from decay_dynamics.spectral import SpectralDensity


# Hydrogen 2P-1S with the physical coupling
@pytest.fixture(scope="session")
def hydrogen() -> ModelParams:
    return hydrogen_params()


@pytest.fixture(scope="session")
def hydrogen_sd() -> SpectralDensity:
    return SpectralDensity.hydrogen()


# Desk-scale model: large enough coupling that the non-exponential parts are visible
@pytest.fixture(scope="session")
def desk() -> ModelParams:
    return ModelParams(lambda_=0.05, cutoff=1.0, omega0=0.25)


@pytest.fixture(scope="session")
def desk_sd() -> SpectralDensity:
    return SpectralDensity.power_law(2.0)


@pytest.fixture(scope="session")
def hydrogen_desk(hydrogen) -> ModelParams:
    return hydrogen.with_lambda(0.05)


# Channel opening above the initial state, Γ(ω₀) = 0
@pytest.fixture(scope="session")
def closed_channel_sd() -> SpectralDensity:
    return SpectralDensity.channel_sum([(0.5, SpectralDensity.hydrogen())])
