#!/usr/bin/env python3.11

from __future__ import annotations

import argparse
import asyncio
import logging
import math
import pathlib
import sys
from typing import Any, Sequence

import pandas as pd
import termcolor

from . import __version__, amplitude, asymptotics, pole, selfenergy, spectral, vanhove
from .config import RunConfig, load_config
from .env_config import DECAY_LOG_TYPE, DECAY_THREADS
from .errors import ConfigError, NumericalError, UnsupportedOperationError
from .logging_config import logging_with_values, setup_logging
from .params import ModelParams, energy_to_si, from_internal
from .utils import FLOAT_FORMAT, json_dumps, with_semaphore

_logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COMMANDS = ("constants", "selfenergy", "pole", "survival", "asymptotics", "vanhove-sweep", "kernel-compare")

# published hydrogen 2P-1S values, SI
REFERENCE_VALUES = {
    "lambda": 0.802e-4,
    "cutoff": 8.498e18,
    "omega0": 1.550e16,
    "tau_Z": 3.593e-15,
    "gamma": 6.268e8,
    "tau_E": 1.595e-9,
    "delta_E_ratio": 0.491,
}


class Report:
    """Command output: a table for CSV, a document for JSON"""

    def __init__(self, command: str, rows: list[dict[str, Any]], document: dict[str, Any] | None = None) -> None:
        self.command = command
        self.rows = rows
        self.document = document if document is not None else {"rows": rows}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json_dumps({"schema_version": SCHEMA_VERSION, "command": self.command, **self.document}, indent=2)

        frame = pd.DataFrame(self.rows)
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _reldiff(value: float, reference: float | None) -> float | None:
    if reference is None or not math.isfinite(value):
        return None
    return abs(abs(value) - reference) / reference


# region Commands


def cmd_constants(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    reference = REFERENCE_VALUES if config.model == "hydrogen" else {}

    tau_Z = asymptotics.zeno_time(params, sd)
    tau_E = asymptotics.lifetime(params, sd)
    found = pole.find_pole(params, sd)
    lambda2 = params.lambda_**2
    ratio = found.delta_E / (lambda2 * params.cutoff) if lambda2 > 0 else math.nan

    values = [
        ("lambda", params.lambda_, params.lambda_, "1"),
        ("cutoff", params.cutoff, params.cutoff_si, "rad/s"),
        ("omega0", params.omega0, params.omega0_si, "rad/s"),
        ("tau_Z", tau_Z, tau_Z / params.unit_scale, "s"),
        ("tau_E", tau_E, tau_E / params.unit_scale, "s"),
        ("gamma", found.gamma, energy_to_si(params, found.gamma), "1/s"),
        ("delta_E", found.delta_E, energy_to_si(params, found.delta_E), "rad/s"),
        ("delta_E_ratio", ratio, ratio, "1"),
    ]

    rows = []
    for name, internal, si, unit in values:
        rows.append(
            {
                "quantity": name,
                "internal": internal,
                "si": si,
                "si_unit": unit,
                "reference": reference.get(name),
                "reldiff": _reldiff(si, reference.get(name)),
            }
        )
    return Report("constants", rows)


def cmd_selfenergy(config: RunConfig, energies: list[float] | None) -> Report:
    params, sd = config.build_params(), config.build_density()
    rows = []
    for E in energies or [params.omega0]:
        value = selfenergy.sigma2(params, sd, E)
        rows.append(
            {
                "E": E,
                "re_sigma": value.value.real,
                "im_sigma": value.value.imag,
                "delta": spectral.delta_at(sd, E).delta,
                "gamma": spectral.gamma_at(sd, E),
                "err": value.err_estimate,
            }
        )
    return Report("selfenergy", rows)


def cmd_pole(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    found = pole.find_pole(params, sd, tol=config.pole_tol)
    gamma_si = energy_to_si(params, found.gamma)

    document = {
        **found.model_dump(),
        "gamma_si": gamma_si,
        "tau_E_si": 1.0 / gamma_si if gamma_si > 0 else math.inf,
        "delta_E_si": energy_to_si(params, found.delta_E),
        "perturbative_order2": pole.perturbative_pole(params, sd, order=2),
        "perturbative_order4": pole.perturbative_pole(params, sd, order=4),
    }
    rows = [{"key": k, "value": v} for k, v in sorted(document.items()) if isinstance(v, (int, float))]
    return Report("pole", rows, document)


def _series_rows(params: ModelParams, series: amplitude.SurvivalSeries) -> list[dict[str, float]]:
    t_seconds = from_internal(params, series.times)
    return [
        {
            "t_internal": t,
            "t_seconds": ts,
            "re_A": a.real,
            "im_A": a.imag,
            "P": p,
            "err": e,
        }
        for t, ts, a, p, e in zip(series.times, t_seconds, series.amplitude, series.probability, series.err_estimate)
    ]


def _engine_kwargs(config: RunConfig) -> dict[str, Any]:
    if config.engine == "volterra":
        return {"step": config.volterra_step, "tol": config.volterra_tol}
    return {}


@logging_with_values(get_context=lambda config, *_, **__: {"engine": config.engine})
def cmd_survival(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    if config.engine == "vanhove_limit":
        raise UnsupportedOperationError("Survival output is in physical time, use vanhove-sweep for the limit")

    grid = config.build_grid(params, sd)
    series = amplitude.compute_series(params, sd, grid, config.engine, **_engine_kwargs(config))
    rows = _series_rows(params, series)
    return Report("survival", rows, {"engine": config.engine, "rows": rows})


def cmd_asymptotics(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    coeffs = asymptotics.coefficients(params, sd)
    literal = asymptotics.power_transition_time(params, coeffs, "literal")
    as_written = asymptotics.power_transition_time(params, coeffs, "as_written")
    scales = asymptotics.timescales(params, sd)

    document = {
        "coefficients": coeffs.model_dump(),
        "timescales": scales.model_dump(),
        "tau_pow_over_tau_E": literal.x,
        "tau_pow_over_tau_E_as_written": as_written.x,
        "tau_pow_over_tau_E_bisection": asymptotics.bisect_transition_time(params, coeffs, "literal"),
        "tau_pow_leading": literal.leading,
        "tau_pow_si": from_internal(params, literal.tau_pow),
    }
    rows = [
        {"key": "tau_Z", "value": scales.tau_Z},
        {"key": "tau_E", "value": scales.tau_E},
        {"key": "tau_pow", "value": scales.tau_pow},
        {"key": "tau_pow_over_tau_E", "value": literal.x},
        {"key": "tau_pow_over_tau_E_as_written", "value": as_written.x},
        {"key": "Z_mag", "value": coeffs.Z_mag},
        {"key": "C_mag", "value": coeffs.C_mag},
        {"key": "zeta", "value": coeffs.zeta},
        {"key": "zeta_c", "value": coeffs.zeta_c},
        {"key": "eta", "value": coeffs.eta},
    ]
    return Report("asymptotics", rows, document)


@logging_with_values(get_context=lambda config: {"command": "vanhove-sweep", "engine": config.engine})
async def cmd_vanhove_sweep(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    lambdas = vanhove.check_lambdas(list(config.lambdas))
    worker = with_semaphore(DECAY_THREADS)(_to_thread)

    async with asyncio.TaskGroup() as tg:
        tasks = [tg.create_task(worker(vanhove.sweep_point, params, sd, x, None, config.engine)) for x in lambdas]

    report = vanhove.assemble_report([x.result() for x in tasks], spectral.threshold_exponent(sd))
    rows = [
        {
            "lambda": x.lambda_,
            "tau_Z_tilde": x.tau_Z_tilde,
            "tau_E_tilde": x.tau_E_tilde,
            "tau_pow_tilde": x.tau_pow_tilde,
            "D": x.deviation,
            "error": x.error or "",
        }
        for x in report.points
    ]
    return Report("vanhove-sweep", rows, report.model_dump())


@logging_with_values(get_context=lambda name, *_, **__: {"kernel": name})
def _kernel_solve(name: str, params: ModelParams, kernel: amplitude.MemoryKernel, grid, config: RunConfig):
    _logger.info("Solving with the %s kernel", name)
    return amplitude.amplitude_volterra(
        params, kernel, grid, step=config.volterra_step, tol=config.volterra_tol, closed_form_markov=True
    )


@logging_with_values(get_context=lambda config: {"command": "kernel-compare"})
async def cmd_kernel_compare(config: RunConfig) -> Report:
    params, sd = config.build_params(), config.build_density()
    grid = config.build_grid(params, sd)
    kernels = {
        "memory": amplitude.memory_kernel(params, sd),
        "markov": amplitude.MemoryKernel.vanhove(params, sd),
    }
    worker = with_semaphore(DECAY_THREADS)(_to_thread)

    async with asyncio.TaskGroup() as tg:
        tasks = {k: tg.create_task(worker(_kernel_solve, k, params, v, grid, config)) for k, v in kernels.items()}

    memory, markov = tasks["memory"].result(), tasks["markov"].result()
    rows = [
        {"t_internal": t, "t_seconds": ts, "P_memory": p, "P_markov": q, "err": e}
        for t, ts, p, q, e in zip(
            grid.points,
            from_internal(params, grid.points),
            memory.probability,
            markov.probability,
            memory.err_estimate,
        )
    ]
    return Report("kernel-compare", rows)


# endregion


async def _to_thread(fcn, *args, **kwargs):
    return await asyncio.to_thread(fcn, *args, **kwargs)


async def main(args: argparse.Namespace, config: RunConfig) -> Report:
    _logger.info(
        "decay_dynamics %s: command=%s model=%s threads=%s", __version__, args.command, config.model, DECAY_THREADS
    )
    worker = with_semaphore(DECAY_THREADS)(_to_thread)

    match args.command:
        case "constants":
            return await worker(cmd_constants, config)
        case "selfenergy":
            return await worker(cmd_selfenergy, config, args.energy)
        case "pole":
            return await worker(cmd_pole, config)
        case "survival":
            return await worker(cmd_survival, config)
        case "asymptotics":
            return await worker(cmd_asymptotics, config)
        case "vanhove-sweep" | "kernel-compare":
            command = cmd_vanhove_sweep if args.command == "vanhove-sweep" else cmd_kernel_compare
            try:
                return await command(config)
            except ExceptionGroup as e:
                # task groups wrap failures, the exit code follows the first one
                raise e.exceptions[0] from e
        case _:
            raise ConfigError("Unknown command", args.command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decay_dynamics")
    parser.add_argument("command", choices=COMMANDS)
    # region
    parser.add_argument(
        "--config",
        type=pathlib.Path,
        default=None,
        help="key=value file, flags override its values",
    )
    parser.add_argument(
        "-d",
        "--debug",
        type=int,
        choices=[50, 40, 30, 20, 10, 1],
        default=30,
        help="Set global debug level [CRITICAL=50, ERROR=40, WARNING=30, INFO=20, DEBUG=10, SPAM=1]",
    )
    # endregion
    # ---- model ----
    # region
    parser.add_argument("--model", choices=["hydrogen", "generic", "table"], default=None)
    parser.add_argument("--table", default=None, help="CSV with (omega, density) columns in internal units")
    parser.add_argument("--lambda", dest="lambda", type=float, default=None)
    parser.add_argument("--cutoff", type=float, default=None, help="Cutoff in rad/s, 1 keeps internal units")
    parser.add_argument("--omega0", type=float, default=None, help="Initial-state energy in the units of --cutoff")
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--m-e", dest="m_e", type=float, default=None, help="Electron rest frequency in rad/s")
    # endregion
    # ---- time grid and engine ----
    # region
    parser.add_argument("--engine", choices=["spectral", "pole_cut", "volterra", "vanhove_limit", "bromwich"])
    parser.add_argument("--tmin", type=float, default=None)
    parser.add_argument("--tmax", type=float, default=None)
    parser.add_argument("--tcount", type=int, default=None)
    parser.add_argument("--tspacing", choices=["linear", "log"], default=None)
    parser.add_argument(
        "--tunit",
        choices=["tau_E", "internal", "seconds"],
        default=None,
        help="Unit of --tmin/--tmax, tau_E by default",
    )
    parser.add_argument("--volterra-step", dest="volterra_step", type=float, default=None)
    parser.add_argument("--volterra-tol", dest="volterra_tol", type=float, default=None)
    parser.add_argument("--pole-tol", dest="pole_tol", type=float, default=None)
    parser.add_argument(
        "--lambdas",
        nargs="+",
        type=float,
        default=None,
        help="`--lambdas 3e-2 1e-2 3e-3` Strictly decreasing couplings for vanhove-sweep",
    )
    parser.add_argument(
        "--energy",
        nargs="+",
        type=float,
        default=None,
        help="Real energies (internal units) for the selfenergy command, omega0 by default",
    )
    # endregion
    # ---- output ----
    # region
    parser.add_argument("--format", choices=["csv", "json"], default=None)
    parser.add_argument("--out", type=pathlib.Path, default=None, help="Output file, stdout when missing")
    # endregion
    return parser


_OVERRIDE_KEYS = (
    "model",
    "table",
    "lambda",
    "cutoff",
    "omega0",
    "eta",
    "alpha",
    "m_e",
    "engine",
    "tmin",
    "tmax",
    "tcount",
    "tspacing",
    "tunit",
    "volterra_step",
    "volterra_tol",
    "pole_tol",
    "lambdas",
    "format",
    "out",
)


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.debug, DECAY_LOG_TYPE)

    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
        config = load_config(args.config, overrides)
        report = asyncio.run(main(args, config))
    except (ConfigError, UnsupportedOperationError) as e:
        termcolor.cprint(f"Configuration error: {e}", color="red", file=sys.stderr)
        return 2
    except NumericalError as e:
        termcolor.cprint(f"Numerical failure: {e}", color="red", file=sys.stderr)
        return 3

    text = report.render(config.format)
    if config.out is None:
        sys.stdout.write(text)
    else:
        config.out.write_text(text)
        _logger.info("Written %s", config.out)

    return 0


if __name__ == "__main__":
    sys.exit(run())
