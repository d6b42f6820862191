from __future__ import annotations

import math

import pytest

from decay_dynamics.config import RunConfig, load_config, parse_config_file
from decay_dynamics.errors import ConfigError
from decay_dynamics.params import hydrogen_params


def test_defaults():
    config = load_config()
    assert config.model == "hydrogen"
    assert config.engine == "pole_cut"
    assert config.lambdas == (3e-2, 1e-2, 3e-3, 1e-3)
    assert config.build_params().lambda_ == hydrogen_params().lambda_
    assert config.build_params().omega0 == hydrogen_params().omega0


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# desk model\nmodel = generic\nlambda = 0.02\n\nomega0 = 0.3  # below the cutoff\nlambdas = 3e-2, 1e-2\n"
    )

    assert parse_config_file(path)["omega0"] == "0.3"

    config = load_config(path, {"lambda": 0.03, "eta": None})
    assert config.lambda_ == 0.03
    assert config.omega0 == 0.3
    assert config.eta is None
    assert config.lambdas == (3e-2, 1e-2)

    params = config.build_params()
    assert params.lambda_ == 0.03
    assert params.omega0 == 0.3
    assert config.build_density().eta == 2.0


@pytest.mark.parametrize(
    "text",
    ["model generic\n", "= 3\n"],
)
def test_malformed_file(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError):
        parse_config_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


@pytest.mark.parametrize(
    "values",
    [
        {"model": "table"},
        {"table": "density.csv"},
        {"tmin": 2.0, "tmax": 1.0},
        {"tcount": 1},
        {"tspacing": "log", "tmin": 0.0},
        {"omega0": 0.1},
        {"engine": "laplace"},
        {"unknown": 1},
    ],
)
def test_invalid_config(values):
    with pytest.raises(ConfigError):
        load_config(overrides=values)


def test_single_time_point():
    config = load_config(overrides={"tmin": 0.0, "tmax": 0.0, "tcount": 1})
    params, sd = config.build_params(), config.build_density()
    assert config.build_grid(params, sd).points.tolist() == [0.0]


def test_grid_units():
    config = load_config(overrides={"tmin": 1.0, "tmax": 2.0, "tcount": 2})
    params, sd = config.build_params(), config.build_density()
    tau_E = config.build_grid(params, sd).points[0]

    seconds = RunConfig(tunit="seconds", tmin=tau_E / params.unit_scale, tmax=1e-8, tcount=2)
    assert seconds.build_grid(params, sd).points[0] == pytest.approx(tau_E)
    assert math.isclose(tau_E / params.unit_scale, 1.595e-9, rel_tol=2e-3)

    with pytest.raises(ConfigError):
        config.build_grid(params.with_lambda(0.0), sd)


def test_table_model(tmp_path):
    path = tmp_path / "density.csv"
    path.write_text("0.0,0.0\n0.1,0.05\n0.2,0.08\n0.3,0.07\n")
    config = load_config(overrides={"model": "table", "table": str(path), "eta": 2.0, "omega0": 0.15})
    sd = config.build_density()
    assert sd.kind == "tabulated"
    assert sd.table_omega == (0.0, 0.1, 0.2, 0.3)

    broken = load_config(overrides={"model": "table", "table": str(tmp_path / "missing.csv")})
    with pytest.raises(ConfigError):
        broken.build_density()
