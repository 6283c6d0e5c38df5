"""hkcli: An exact-arithmetic Hegselmann-Krause simulator and termination-proof checker using Click.

This module provides the main CLI for simulating runs, verifying recorded trajectories, generating instances and
running termination-time sweeps.
"""

import json
import os
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, NoReturn, get_type_hints

import click
import toml
from click import echo, secho
from pydantic import BaseModel, Field, ValidationError

from hkcli import (
    constants,
    utils,
)
from hkcli import kit_dynamics as dynamics
from hkcli import kit_generators as generators
from hkcli import kit_invariants as invariants
from hkcli import kit_lyapunov as lyapunov
from hkcli import kit_phases as phases
from hkcli import kit_sweep as sweep


class Config(BaseModel):
    """
    General config for the CLI
    """

    # Cap on the denominators of randomly drawn opinions.
    max_denominator: int = constants.DEFAULT_MAX_DENOMINATOR

    # Equality tolerance of float mode.
    float_tolerance: float = Field(default=1e-12, ge=0)

    # Directory for sweep CSV files given as a bare file name.
    sweep_export_dir: str = ""

    workers: int = 1


CONFIG_PATH = constants.BASE_PATH.joinpath("config.toml")


class RationalParamType(click.ParamType):
    """
    Click parameter parsed into an exact Fraction ("1/3", "2", "0.25").
    """

    name = "rational"

    def convert(self, value: Any, param: click.Parameter | None, ctx: click.Context | None) -> Fraction:
        try:
            return utils.parse_rational(value)
        except ValueError as e:
            self.fail(str(e), param, ctx)


RATIONAL = RationalParamType()


def _fail(ctx: click.Context, message: str, code: int) -> NoReturn:
    secho(f"Error: {message}", fg="red", err=True)
    ctx.exit(code)


@click.group()
@click.pass_context
def cli(ctx: click.Context) -> None:
    """Hegselmann-Krause dynamics CLI."""
    # ensure that ctx.obj exists and is a dict (in case `cli()` is called
    # by means other than the `if` block below)
    ctx.ensure_object(dict)

    # Load config file if exists
    config_dict = {}
    config_path = CONFIG_PATH
    if config_path.exists() and config_path.is_file():
        config_dict = toml.load(config_path)
    ctx.obj["config"] = Config.model_validate(config_dict)


# ---
# Config
# ---


@cli.group(name="config")
@click.pass_context
def config_cli(_: click.Context) -> None:
    """Group command to set up basic config"""


@config_cli.command(name="list")
@click.pass_context
def config_list(ctx: click.Context) -> None:
    """
    Command to list the config values.
    """
    config: Config = ctx.obj["config"]
    echo("Config:")
    for key, value in _config_to_kv(config):
        echo(f"{key} = {value}")


def _config_to_kv(config: BaseModel, prefix: str = "") -> list:
    kv_pairs = []

    for field in type(config).model_fields:
        key = f"{prefix}.{field}" if prefix else field
        value = getattr(config, field)

        if isinstance(value, BaseModel):
            kv_pairs.extend(_config_to_kv(value, key))
        else:
            kv_pairs.append((key, value))

    return kv_pairs


@config_cli.command(name="set")
@click.argument("key", type=str)
@click.argument("value", type=str)
@click.pass_context
def config_set(
    ctx: click.Context,
    key: str,
    value: str,  # converted to the declared type of the field
) -> None:
    """
    Command to set the value of a specific config key.
    """
    config: Config = ctx.obj["config"]
    try:
        _update_config(config, key, value)
    except (KeyError, TypeError) as e:
        raise click.BadParameter(str(e), param_hint="key/value") from e
    _save_config(config)


def _update_config(config: BaseModel, key: str, value: str) -> None:
    hints = get_type_hints(config.__class__)
    if key not in type(config).model_fields:
        raise KeyError(f"unknown config key {key!r}")

    # Convert string to declared type if necessary
    declared_type = hints[key]
    if declared_type is int or declared_type is float:
        try:
            converted = declared_type(value)
        except ValueError as e:
            raise TypeError(f"cannot convert {value!r} to {declared_type.__name__}") from e
    else:
        converted = value

    if not isinstance(converted, declared_type):
        raise TypeError(f"expected type {declared_type} for field {key}, got {type(converted)}")
    if declared_type is int and converted < 1:
        raise TypeError(f"{key} must be positive")
    if declared_type is float and not converted >= 0:
        raise TypeError(f"{key} must be non-negative")

    setattr(config, key, converted)


def _to_dict_without_default(model: BaseModel) -> dict[str, Any]:
    fields = type(model).model_fields
    return {k: v for k, v in model.__dict__.items() if v != fields[k].default}


def _save_config(config: Config):
    config_str = utils.toml_dumps_with_newline(_to_dict_without_default(config))

    # Create directory for first time use
    if not constants.BASE_PATH.exists():
        os.makedirs(constants.BASE_PATH, exist_ok=True)

    with open(CONFIG_PATH, "w", encoding="utf-8") as file:
        file.write(config_str)


# ---
# Simulate / Verify
# ---


def _load_profile(input_path: str, epsilon: Fraction | None) -> dynamics.OpinionProfile:
    profile = generators.ingest(Path(input_path).expanduser())
    if epsilon is not None:
        profile = dynamics.OpinionProfile(epsilon=epsilon, opinions=profile.opinions)
    return profile


def _write_json(path: str, data: dict) -> None:
    with open(Path(path).expanduser(), "w", encoding="utf-8") as file:
        json.dump(data, file, indent=2)
        file.write("\n")


def _report_suite(suite: invariants.CheckSuiteResult) -> None:
    if suite.passed:
        secho(f"All {suite.checks_run} checks passed.", fg="green")
    else:
        secho(f"{len(suite.violations)} violation(s) in {suite.checks_run} checks.", fg="red", err=True)
        echo(json.dumps(suite.to_report(), indent=2))


@cli.command(name="simulate")
@click.option(
    "--input",
    "input_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="JSON file with 'epsilon' and 'opinions'.",
)
@click.option("--epsilon", type=RATIONAL, help="Overrides the epsilon of the input file.")
@click.option("--max-steps", type=click.IntRange(min=0), help="Step budget. Defaults to 3n^3 + n.")
@click.option("--emit", "emit_path", type=click.Path(dir_okay=False), help="Writes the trajectory as JSON Lines.")
@click.option(
    "--annotated",
    "annotated_path",
    type=click.Path(dir_okay=False),
    help="Writes the per-step Lyapunov records as JSON Lines.",
)
@click.option("--phases", "phases_path", type=click.Path(dir_okay=False), help="Writes the phase decomposition.")
@click.option("--check", is_flag=True, help="Runs every invariant check on the trajectory.")
@click.option("--mode", type=click.Choice(["exact", "float"]), default="exact", show_default=True)
@click.option(
    "--tolerance",
    type=click.FloatRange(min=0),
    help="Equality tolerance in float mode. Defaults to the config value.",
)
@click.pass_context
def simulate(
    ctx: click.Context,
    input_path: str,
    epsilon: Fraction | None,
    max_steps: int | None,
    emit_path: str | None,
    annotated_path: str | None,
    phases_path: str | None,
    check: bool,
    mode: str,
    tolerance: float | None,
) -> None:
    """Simulates HK dynamics from an initial profile until it reaches a fixed point."""
    config: Config = ctx.obj["config"]
    if mode == "float" and check:
        raise click.UsageError("--check needs exact arithmetic and cannot be combined with --mode float")
    if mode == "exact" and tolerance is not None:
        raise click.UsageError("--tolerance only applies to --mode float")

    try:
        profile = _load_profile(input_path, epsilon)
    except ValueError as e:
        _fail(ctx, str(e), constants.EXIT_INPUT_ERROR)

    if mode == "float":
        profile = dynamics.to_float(profile)
        tolerance = tolerance if tolerance is not None else config.float_tolerance

    trajectory, result = dynamics.simulate(profile, max_steps=max_steps, tolerance=tolerance)
    if emit_path:
        utils.write_jsonl(Path(emit_path).expanduser(), dynamics.trajectory_records(trajectory))

    if result.truncated:
        secho(f"n={profile.n}: no fixed point within {result.T} steps.", fg="yellow", err=True)
        ctx.exit(constants.EXIT_TRUNCATED)
    echo(f"n={profile.n} T={result.T}")

    if not (annotated_path or phases_path or check):
        return

    trajectory = lyapunov.annotate(trajectory)
    if annotated_path:
        utils.write_jsonl(Path(annotated_path).expanduser(), lyapunov.annotated_records(trajectory))

    decomposition = phases.decompose(trajectory)
    counts = phases.phase_counts(decomposition)
    echo(f"I={counts['I']} D={counts['D']} S={counts['S']} phases={len(decomposition.phases)}")
    frozen = phases.frozen_value_set(decomposition)
    if frozen:
        echo("frozen=" + ",".join(utils.format_rational(value) for value in frozen))
    if phases_path:
        _write_json(phases_path, decomposition.to_report())

    if check:
        suite = invariants.run_suite(trajectory, decomposition)
        _report_suite(suite)
        if not suite.passed:
            ctx.exit(constants.EXIT_VIOLATION)


@cli.command(name="verify")
@click.argument("trajectory_path", metavar="TRAJECTORY", type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=RATIONAL, help="Confidence bound, if the records do not carry it.")
@click.pass_context
def verify(ctx: click.Context, trajectory_path: str, epsilon: Fraction | None) -> None:
    """Re-checks a recorded trajectory step by step and runs every invariant check on it."""
    try:
        records = utils.read_jsonl(Path(trajectory_path).expanduser())
        trajectory = invariants.replay(records, epsilon)
    except dynamics.DynamicsMismatchError as e:
        _fail(ctx, str(e), constants.EXIT_DYNAMICS_MISMATCH)
    except ValueError as e:
        _fail(ctx, str(e), constants.EXIT_INPUT_ERROR)

    if trajectory.truncated:
        _fail(ctx, f"the last record (t={trajectory.T}) is not a fixed point", constants.EXIT_TRUNCATED)

    suite = invariants.run_suite(trajectory)
    echo(json.dumps(suite.to_report(), indent=2))
    if not suite.passed:
        ctx.exit(constants.EXIT_VIOLATION)


# ---
# Instances
# ---


def _instance_options(func):
    options = [
        click.option(
            "--kind",
            type=click.Choice([k.value for k in generators.InstanceKind if k != generators.InstanceKind.FROM_FILE]),
            required=True,
            help="Instance family.",
        ),
        click.option("--epsilon", type=RATIONAL, default="1", show_default=True, help="Confidence bound."),
        click.option("--spacing", type=RATIONAL, help="Spacing of equidistant agents. Defaults to epsilon."),
        click.option("--gap", type=RATIONAL, help="Distance between the two clusters. Defaults to epsilon."),
        click.option("--sizes", type=(int, int), help="Block sizes of two_cluster and dumbbell."),
        click.option("--base", type=RATIONAL, default="0", show_default=True, help="Leftmost opinion."),
        click.option(
            "--max-denom", "max_denom", type=click.IntRange(min=1), help="Denominator cap of random opinions."
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _template(ctx: click.Context, n: int, seed: int, params: dict) -> generators.InstanceSpec:
    config: Config = ctx.obj["config"]
    return generators.InstanceSpec(
        kind=params["kind"],
        n=n,
        epsilon=params["epsilon"],
        spacing=params["spacing"],
        gap=params["gap"],
        sizes=params["sizes"],
        base=params["base"],
        seed=seed,
        max_denominator=generators.resolve_max_denominator(params["max_denom"], config.max_denominator),
    )


@cli.command(name="generate")
@_instance_options
@click.option("--n", "n", type=click.IntRange(min=1), required=True, help="Number of agents.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of random instances.")
@click.option("--out", type=click.Path(dir_okay=False), help="Output file. Prints to stdout when omitted.")
@click.pass_context
def generate(ctx: click.Context, n: int, seed: int, out: str | None, **params) -> None:
    """Generates an initial profile as JSON."""
    try:
        profile = generators.generate(_template(ctx, n, seed, params))
    except ValueError as e:
        _fail(ctx, str(e), constants.EXIT_INPUT_ERROR)

    if out:
        generators.dump(profile, Path(out).expanduser())
    else:
        echo(json.dumps(generators.emit(profile)))


def _sweep_output(config: Config, out: str) -> Path:
    path = Path(out).expanduser()
    if config.sweep_export_dir and path.parent == Path("."):
        path = Path(config.sweep_export_dir).expanduser() / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@cli.command(name="sweep")
@_instance_options
@click.option("--n-min", type=click.IntRange(min=1), required=True)
@click.option("--n-max", type=click.IntRange(min=1), required=True)
@click.option("--n-step", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--repetitions", type=click.IntRange(min=1), default=1, show_default=True, help="Seeds per n.")
@click.option("--seed", "seed_base", type=int, default=0, show_default=True, help="Seed of the first repetition.")
@click.option("--max-steps", type=click.IntRange(min=0), help="Step budget per run. Defaults to 3n^3 + n.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV output file.")
@click.option("--keep-going", is_flag=True, help="Records violations instead of aborting on the first one.")
@click.option("--workers", type=click.IntRange(min=1), help="Worker processes. Defaults to the config value.")
@click.option("--no-timing", is_flag=True, help="Writes 0 in the ms column so that the CSV is reproducible.")
@click.pass_context
def sweep_command(
    ctx: click.Context,
    n_min: int,
    n_max: int,
    n_step: int,
    repetitions: int,
    seed_base: int,
    max_steps: int | None,
    out: str,
    keep_going: bool,
    workers: int | None,
    no_timing: bool,
    **params,
) -> None:
    """Runs a termination-time sweep and writes one CSV row per run."""
    config: Config = ctx.obj["config"]
    try:
        sweep_config = sweep.SweepConfig(
            template=_template(ctx, n_min, seed_base, params),
            n_min=n_min,
            n_max=n_max,
            n_step=n_step,
            repetitions=repetitions,
            seed_base=seed_base,
            max_steps=max_steps,
            out=_sweep_output(config, out),
            keep_going=keep_going,
            workers=workers if workers is not None else config.workers,
            timing=not no_timing,
        )
        specs = sweep_config.instances()
    except (ValidationError, ValueError) as e:
        _fail(ctx, str(e), constants.EXIT_INPUT_ERROR)

    echo(f"Sweeping {len(specs)} runs of {params['kind']} instances.")
    started = time.perf_counter()
    try:
        rows, failed = sweep.run_sweep(sweep_config)
    except sweep.SweepAbortedError as e:
        code = constants.EXIT_TRUNCATED if e.truncated else constants.EXIT_VIOLATION
        _fail(ctx, str(e), code)

    sweep.write_csv(rows, sweep_config.out)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    echo(f"Wrote {len(rows)} rows to {sweep_config.out} in {utils.format_duration_from_ms(elapsed_ms)}.")
    echo(sweep.summarize(rows).to_string())

    if failed:
        secho(f"{len(failed)} run(s) had violations.", fg="red", err=True)
        ctx.exit(constants.EXIT_VIOLATION)
