"""Defines the CLI interface."""
import contextlib
import csv
import io
import json
import pathlib
import typing as t

import click
from click.shell_completion import CompletionItem
from loguru import logger
from rich.markup import escape
from rich.pretty import Pretty

from sonarpnp import console
from sonarpnp.config import (
    config_data,
    default_config_data,
    local_config_data,
    set_config_value,
    unset_config_key,
)
from sonarpnp.errors import INPUT_ERRORS, SonarPnPError
from sonarpnp.harness.noise import apply_polar_noise
from sonarpnp.harness.scene import ScenarioConfig, SceneMode, generate_scene
from sonarpnp.harness.sweep import (
    SweepConfig,
    run_sweep,
    trial_rng,
    write_outputs,
)
from sonarpnp.helpers.dotted_mapping import DottedMapping
from sonarpnp.helpers.logging import setup_logging
from sonarpnp.instance_io import (
    ArrayEncoder,
    Instance,
    dump_instance,
    instance_to_json,
    load_instance,
)
from sonarpnp.pipeline import (
    CoplanarPolicy,
    Solution,
    SolveRequest,
    TzMethod,
    pipeline_solve,
)
from sonarpnp.type_aliases import JSONVals
from sonarpnp.utils.print_solution import print_solution

INPUT_ERROR_EXIT = 1
SOLVER_ERROR_EXIT = 2


@click.group(
    no_args_is_help=True,
    epilog="Run 'sonarpnp command --help' to get help on a command.",
    context_settings=dict(help_option_names=["-h", "--help"]),
)
@click.version_option(None, "-v", "--version", package_name=__package__)
@click.option(
    "--log",
    "log_level",
    type=click.Choice(["error", "warning", "info", "debug"]),
    default=None,
    help="Console log level; defaults to the log.level config value.",
)
def app(log_level: t.Optional[str]) -> None:
    """Certifiably optimal pose estimation for 2D forward-looking sonar."""
    setup_logging(log_level)


@contextlib.contextmanager
def exit_on_error() -> t.Iterator[None]:
    """Turn package errors into a one-line message and an exit code."""
    try:
        yield
    except SonarPnPError as e:
        code = (
            INPUT_ERROR_EXIT
            if isinstance(e, INPUT_ERRORS)
            else SOLVER_ERROR_EXIT
        )
        logger.debug(f"Exiting with {code} after {type(e).__name__}.")
        console.print(f"[red]{type(e).__name__}:[/] {escape(str(e))}")
        raise SystemExit(code) from None


def _solution_json(solution: Solution) -> dict[str, JSONVals]:
    return {
        "pose": solution.pose,
        "diagnostics": solution.diagnostics.as_dict(),
    }


def _solution_csv(solution: Solution) -> str:
    d = solution.diagnostics
    header = [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    header += ["tx", "ty", "tz", "kernel_dim", "relative_gap", "certified"]
    header.append("flags")
    row = [*solution.pose.rotation.ravel(), *solution.pose.translation]
    row += [d.kernel_dim, d.relative_gap, d.certified, ";".join(d.flags)]

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerow(map(str, row))
    return buffer.getvalue()


def format_solution(solution: Solution, fmt: str) -> str:
    """Serialize a solution as JSON or a one-row CSV."""
    if fmt == "csv":
        return _solution_csv(solution)
    return json.dumps(_solution_json(solution), indent=4, cls=ArrayEncoder)


@app.command()
@click.option(
    "-i",
    "--input",
    "input_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    help="Instance file to solve.",
)
@click.option("--refine", is_flag=True, help="Refine on the arc model.")
@click.option(
    "--tz",
    "tz_method",
    type=click.Choice([method.value for method in TzMethod]),
    default=TzMethod.CLOSED_FORM.value,
    show_default=True,
    help="Closed-form quartic or 1D optimization for t_z.",
)
@click.option(
    "--coplanar",
    "coplanar_policy",
    type=click.Choice([policy.value for policy in CoplanarPolicy]),
    default=CoplanarPolicy.AUTO.value,
    show_default=True,
    help="Pick the rotation recovery, or let the kernel decide.",
)
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, writable=True, path_type=pathlib.Path),
    help="Write the solution to this file.",
)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "csv"]),
    default=None,
    help="Serialize the solution instead of printing tables.",
)
def solve(
    input_path: pathlib.Path,
    refine: bool,
    tz_method: str,
    coplanar_policy: str,
    output: t.Optional[pathlib.Path],
    fmt: t.Optional[str],
) -> None:
    """
    Solve the pose of one instance file.

    Example: sonarpnp solve --input scene.json --refine
    """
    with exit_on_error():
        instance = load_instance(input_path)
        solution = pipeline_solve(
            SolveRequest(
                instance.correspondences,
                refine=refine,
                coplanar_policy=CoplanarPolicy(coplanar_policy),
                tz_method=TzMethod(tz_method),
            )
        )

    if output is not None:
        output.write_text(format_solution(solution, fmt or "json") + "\n")
        logger.info(f"Wrote the solution to {output}.")
    elif fmt is not None:
        click.echo(format_solution(solution, fmt))
    else:
        print_solution(solution, instance.ground_truth)


@app.command()
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    help="TOML or JSON file overriding the harness settings.",
)
@click.option("--seed", type=int, help="Base seed of every trial.")
@click.option("--trials", type=click.IntRange(min=1), help="Trials per cell.")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    default="sweep-results",
    show_default=True,
)
@click.option("--plots", is_flag=True, help="Also write SVG plots.")
@click.option(
    "--timings", is_flag=True, help="Record stage timings in the CSV."
)
@click.option(
    "-w",
    "--workers",
    type=click.IntRange(min=1),
    help="Worker processes; defaults to $SONARPNP_WORKERS or 1.",
)
def sweep(
    config_path: t.Optional[pathlib.Path],
    seed: t.Optional[int],
    trials: t.Optional[int],
    out_dir: pathlib.Path,
    plots: bool,
    timings: bool,
    workers: t.Optional[int],
) -> None:
    """
    Run a Monte-Carlo benchmark sweep.

    Example: sonarpnp sweep --config baseline.toml --seed 7 --plots
    """
    with exit_on_error():
        cfg = SweepConfig.load(
            config_path,
            seed=seed,
            trials=trials,
            record_timings=timings or None,
        )
        result = run_sweep(cfg, workers)
        cells = write_outputs(result, out_dir)

    if plots:
        from sonarpnp.harness.plots import plot_cells

        plot_cells(cells, out_dir / "plots")


@app.command()
@click.option(
    "--mode",
    type=click.Choice([mode.value for mode in SceneMode]),
    default=SceneMode.GENERAL.value,
    show_default=True,
)
@click.option(
    "-n", "--n", "point_count", type=int, default=20, show_default=True
)
@click.option(
    "--sigma",
    type=click.FloatRange(min=0),
    default=0.0,
    show_default=True,
    help="Range (m) and bearing (rad) noise.",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, writable=True, path_type=pathlib.Path),
    help="Write the instance here instead of to stdout.",
)
def gen(
    mode: str,
    point_count: int,
    sigma: float,
    seed: int,
    output: t.Optional[pathlib.Path],
) -> None:
    """
    Generate a synthetic instance with its ground truth.

    Example: sonarpnp gen --mode coplanar --n 20 --sigma 0.025 --seed 1
    """
    with exit_on_error():
        scenario = ScenarioConfig.from_config(
            mode, point_count, sigma, seed=seed
        )
        rng = trial_rng(seed, 0, 0)
        scene = generate_scene(scenario, rng)
        noisy, clamped = apply_polar_noise(
            scene.correspondences, sigma, rng
        )

    meta: dict[str, JSONVals] = {
        "mode": mode,
        "n_points": point_count,
        "sigma": sigma,
        "seed": seed,
        "projection": scenario.projection.kind.value,
        "ground_truth_translation_frame": "sonar",
        "clamped_ranges": clamped,
    }
    instance = Instance(noisy, meta, scene.pose)
    if output is None:
        click.echo(
            json.dumps(instance_to_json(instance), indent=4, cls=ArrayEncoder)
        )
    else:
        dump_instance(instance, output)
        logger.info(f"Wrote a {mode} instance to {output}.")


def validate_config_key(
    ctx: click.Context,
    param: click.Parameter,
    key: str,
) -> str:
    """Reject keys the packaged defaults don't define."""
    if key not in default_config_data:
        raise click.BadParameter(f"'{key}' is not a valid config key.")

    return key


def validate_config_atomic_key(
    ctx: click.Context, param: click.Parameter, key: str
) -> str:
    """Accept only keys that name a leaf value, not a whole section."""
    validate_config_key(ctx, param, key)
    if default_config_data.is_section(key):
        raise click.BadParameter(f"'{key}' is a section.")
    return key


def validate_local_config_atomic_key(
    ctx: click.Context, param: click.Parameter, key: str
) -> str:
    """Accept only leaf keys the user config file overrides."""
    validate_config_atomic_key(ctx, param, key)
    if key in local_config_data:
        return key

    raise click.BadParameter(f"'{key}' has not been set yet.")


def parse_config_value(
    ctx: click.Context, param: click.Parameter, value: str
) -> JSONVals:
    """
    Convert the user's value to the type of the key's default.

    Scalars follow Click's conversion, so 1, yes, etc. are booleans.
    Lists are given as JSON, e.g. '[0.0, 0.025]'.
    """
    default = default_config_data[ctx.params["key"]]
    if isinstance(default, list):
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = None
        if not isinstance(parsed, list):
            raise click.BadParameter(f"{value!r} is not a JSON list.")
        return parsed

    converter = click.types.convert_type(type(default))
    return converter.convert(value, param, ctx)


def complete_keys(
    ctx: click.Context,
    args: t.List[str],
    incomplete: str,
    config: DottedMapping = default_config_data,
) -> list[CompletionItem]:
    """Complete a dotted key from the config argument (the defaults)."""
    return [
        CompletionItem(key)
        for key in config.leaf_keys()
        if key.startswith(incomplete)
    ]


def complete_local_keys(
    ctx: click.Context,
    args: t.List[str],
    incomplete: str,
) -> list[CompletionItem]:
    """Offer the overridden keys as completions."""
    return complete_keys(ctx, args, incomplete, local_config_data)


@app.group()
def config() -> None:
    """Inspect or edit the solver and harness settings."""


def pretty_print(mapping: DottedMapping) -> None:
    """Print a config tree with rich."""
    # Pretty renders plain dicts, not the UserDict wrapper.
    console.print(Pretty(mapping.data, expand_all=True))


def print_config(
    ctx: click.Context, param: click.Parameter, value: str
) -> None:
    """Print the merged config."""
    if not value or ctx.resilient_parsing:
        return
    pretty_print(config_data)
    ctx.exit()


def print_local_config(
    ctx: click.Context, param: click.Parameter, value: str
) -> None:
    """Print the user's overrides."""
    if not value or ctx.resilient_parsing:
        return
    pretty_print(local_config_data)
    ctx.exit()


@config.command()
@click.argument(
    "key",
    type=str,
    callback=validate_config_key,
    shell_complete=complete_keys,
)
@click.option(
    "--all",
    is_flag=True,
    callback=print_config,
    expose_value=False,
    is_eager=True,
)
@click.option(
    "--local",
    is_flag=True,
    callback=print_local_config,
    expose_value=False,
    is_eager=True,
)
def get(key: str) -> None:
    """
    Print a config value or section.

    Example: sonarpnp config get solver.rank_tol
    """
    console.print(config_data[key])


@config.command()
@click.argument(
    "key",
    type=str,
    callback=validate_config_atomic_key,
    shell_complete=complete_keys,
)
@click.argument(
    "value",
    callback=parse_config_value,
)
def set(key: str, value: JSONVals) -> None:
    """
    Override a config value in the user config file.

    Example: sonarpnp config set harness.trials 100
    """
    set_config_value(key, value)


@config.command()
@click.argument(
    "key",
    type=str,
    callback=validate_local_config_atomic_key,
    shell_complete=complete_local_keys,
)
def unset(key: str) -> None:
    """
    Drop an override and fall back to the default.

    Example: sonarpnp config unset harness.trials
    """
    unset_config_key(key)
