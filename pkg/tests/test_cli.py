from __future__ import annotations

import io
import json
import re

import numpy as np
import pandas as pd
import pytest

from decay_dynamics.__main__ import run
from decay_dynamics.spectral import SpectralDensity, gamma_at

NUMBER = re.compile(r"^-?\d\.\d{16}e[+-]\d{2,3}$")


def _csv(capsys, argv: list[str]) -> pd.DataFrame:
    assert run(argv) == 0
    return pd.read_csv(io.StringIO(capsys.readouterr().out))


def _json(capsys, argv: list[str]) -> dict:
    assert run([*argv, "--format", "json"]) == 0
    return json.loads(capsys.readouterr().out)


def test_hydrogen_constants(capsys):
    frame = _csv(capsys, ["constants"]).set_index("quantity")
    assert frame.loc["tau_E", "si"] == pytest.approx(1.595e-9, rel=2e-3)
    assert frame.loc["gamma", "si"] == pytest.approx(6.27e8, rel=2e-3)
    assert frame.loc["tau_Z", "si"] == pytest.approx(3.593e-15, rel=1e-3)
    assert frame.loc["lambda", "reldiff"] < 5e-3


def test_constants_without_coupling(capsys):
    document = _json(capsys, ["constants", "--model", "generic", "--lambda", "0"])
    rows = {x["quantity"]: x for x in document["rows"]}
    assert document["schema_version"] == 1
    assert document["command"] == "constants"
    assert rows["tau_E"]["internal"] == "inf"
    assert rows["tau_Z"]["si"] == "inf"
    assert rows["gamma"]["internal"] == 0


def test_selfenergy(capsys):
    frame = _csv(capsys, ["selfenergy", "--model", "generic", "--energy", "0.25", "0.5"])
    assert frame["E"].tolist() == [0.25, 0.5]
    np.testing.assert_allclose(frame["im_sigma"], -0.5 * frame["gamma"], rtol=1e-9)
    np.testing.assert_allclose(frame["re_sigma"], frame["delta"], rtol=1e-6)


def test_pole(capsys):
    document = _json(capsys, ["pole"])
    assert document["gamma_si"] == pytest.approx(6.27e8, rel=2e-3)
    assert document["degenerate"] is False
    assert set(document["E_pole"]) == {"re", "im"}


def test_survival_at_zero(capsys):
    frame = _csv(capsys, ["survival", "--tmin", "0", "--tmax", "0", "--tunit", "internal"])
    assert len(frame) == 1
    assert frame["P"][0] == pytest.approx(1.0, abs=1e-8)


def test_survival_format(capsys):
    assert run(["survival", "--model", "generic", "--tmax", "2", "--tcount", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()

    assert lines[0] == "t_internal,t_seconds,re_A,im_A,P,err"
    assert len(lines) == 6
    for line in lines[1:]:
        assert all(NUMBER.match(x) for x in line.split(","))


def test_survival_is_deterministic(tmp_path, capsys):
    argv = ["survival", "--model", "generic", "--tmax", "3", "--tcount", "7"]
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    assert run([*argv, "--out", str(first)]) == 0
    assert run([*argv, "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert sorted(x.name for x in tmp_path.iterdir()) == ["first.csv", "second.csv"]
    assert capsys.readouterr().out == ""


def test_survival_follows_exponential(capsys):
    frame = _csv(capsys, ["survival", "--model", "generic", "--tmin", "1", "--tmax", "4", "--tcount", "4"])
    expected = np.exp(-np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(frame["P"], expected, rtol=5e-2)


def test_survival_volterra_default(capsys):
    argv = ["survival", "--model", "generic", "--lambda", "0.05", "--omega0", "0.25", "--eta", "2"]
    volterra = _csv(capsys, [*argv, "--engine", "volterra", "--tmax", "2", "--tcount", "11"])
    pole_cut = _csv(capsys, [*argv, "--engine", "pole_cut", "--tmax", "2", "--tcount", "11"])
    assert (volterra["err"] <= 1e-8).all()
    np.testing.assert_allclose(volterra["P"], pole_cut["P"], atol=1e-6)


@pytest.mark.parametrize("eta", ["1.2", "1.5"])
def test_survival_generic_exponent(capsys, eta):
    frame = _csv(capsys, ["survival", "--model", "generic", "--eta", eta, "--tmax", "2", "--tcount", "5"])
    assert len(frame) == 5
    assert np.all(np.diff(frame["P"]) < 0)
    assert frame["P"].iloc[-1] == pytest.approx(np.exp(-2.0), rel=5e-2)


def test_config_file_and_flags(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("model = generic\nlambda = 0.02\nomega0 = 0.3\nformat = json\n")

    assert run(["constants", "--config", str(path), "--lambda", "0.03"]) == 0
    rows = {x["quantity"]: x for x in json.loads(capsys.readouterr().out)["rows"]}
    assert rows["lambda"]["internal"] == 0.03
    assert rows["omega0"]["internal"] == 0.3


def test_asymptotics(capsys):
    document = _json(capsys, ["asymptotics"])
    assert document["tau_pow_over_tau_E"] == pytest.approx(125.0, abs=2.0)
    assert document["tau_pow_over_tau_E_bisection"] == pytest.approx(document["tau_pow_over_tau_E"], rel=1e-9)
    assert document["timescales"]["seconds"]["tau_Z"] == pytest.approx(3.593e-15, rel=1e-3)


@pytest.mark.slow
def test_kernel_compare(capsys):
    argv = ["kernel-compare", "--model", "generic", "--tmax", "2", "--tcount", "9"]
    frame = _csv(capsys, [*argv, "--volterra-step", "0.4", "--volterra-tol", "1e-5"])
    rate = 0.05**2 * gamma_at(SpectralDensity.power_law(2.0), 0.25)

    np.testing.assert_allclose(frame["P_markov"], np.exp(-rate * frame["t_internal"]), rtol=1e-10)
    np.testing.assert_allclose(frame["P_memory"], frame["P_markov"], rtol=5e-2)
    assert frame["P_memory"][0] == pytest.approx(1.0)


@pytest.mark.slow
def test_vanhove_sweep(capsys):
    frame = _csv(capsys, ["vanhove-sweep", "--lambdas", "1e-2", "3e-3"])
    assert frame.columns.tolist() == ["lambda", "tau_Z_tilde", "tau_E_tilde", "tau_pow_tilde", "D", "error"]
    assert frame["lambda"].tolist() == [1e-2, 3e-3]
    assert frame["error"].isna().all()
    assert frame["D"][0] > frame["D"][1]
    assert frame["tau_Z_tilde"][0] / frame["tau_Z_tilde"][1] == pytest.approx(1e-2 / 3e-3)


def test_bound_state_exit_code(capsys):
    argv = ["survival", "--model", "generic", "--eta", "0.5", "--engine", "pole_cut", "--tunit", "internal"]
    assert run(argv) == 3
    assert "Numerical failure" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["survival", "--model", "table"],
        ["survival", "--tmin", "0", "--tmax", "1", "--tcount", "1"],
        ["survival", "--engine", "vanhove_limit"],
        ["vanhove-sweep", "--lambdas", "1e-3", "1e-2"],
    ],
)
def test_config_exit_code(capsys, argv):
    assert run(argv) == 2
    captured = capsys.readouterr()
    assert "Configuration error" in captured.err
    assert captured.out == ""


def test_stable_state_exit_code(tmp_path, capsys):
    path = tmp_path / "density.csv"
    path.write_text("0.5,0.0\n0.6,0.1\n0.7,0.2\n0.8,0.1\n")
    argv = ["survival", "--model", "table", "--table", str(path), "--eta", "2", "--omega0", "0.25"]
    assert run([*argv, "--tunit", "internal", "--engine", "spectral"]) == 3
    assert "Gamma(omega0) = 0" in capsys.readouterr().err
