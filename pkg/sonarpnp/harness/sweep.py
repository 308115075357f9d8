"""
Multi-trial benchmark sweeps over point counts and noise levels.

A sweep is the product of modes, point counts and noise levels; every
cell runs the same number of trials. Trial i of cell k draws all of its
randomness from a Philox stream keyed on (seed, k, i), so results don't
depend on the number of workers or the order in which trials finish.
"""
import concurrent.futures
import csv
import dataclasses
import json
import math
import os
import pathlib
import sys
import typing as t

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
from loguru import logger
from mergedeep import Strategy, merge
from rich.progress import track

from sonarpnp import config, console
from sonarpnp.errors import InvalidConfiguration, SonarPnPError
from sonarpnp.harness.metrics import rotation_error_deg, translation_errors
from sonarpnp.harness.noise import apply_polar_noise
from sonarpnp.harness.scene import ScenarioConfig, SceneMode, generate_scene
from sonarpnp.instance_io import ArrayEncoder
from sonarpnp.meta import WORKERS_ENV_VAR
from sonarpnp.models import FovSpec, ProjectionKind, ProjectionModel
from sonarpnp.pipeline import (
    CoplanarPolicy,
    SolveRequest,
    TzMethod,
    pipeline_solve,
    variant_name,
)
from sonarpnp.type_aliases import JSONVals

CSV_HEADER = (
    "mode",
    "n_points",
    "sigma",
    "trial",
    "rot_err_deg",
    "txy_err_m",
    "tz_err_m",
    "gap",
    "kernel_dim",
    "time_total_ms",
    "time_sdp_ms",
    "time_tz_ms",
    "flags",
)
METRICS = ("rot_err_deg", "txy_err_m", "tz_err_m", "gap")
TIMINGS = ("time_total_ms", "time_sdp_ms", "time_tz_ms")


@dataclasses.dataclass(slots=True, frozen=True)
class SweepConfig:
    """
    The grid and pipeline options of a sweep.

    points maps each mode to its point counts. An empty n_points list in
    the harness settings means each mode uses its full default grid.
    """

    modes: tuple[SceneMode, ...]
    points: dict[SceneMode, tuple[int, ...]]
    sigmas: tuple[float, ...]
    trials: int
    seed: int
    record_timings: bool = False
    refine: bool = False
    tz_method: TzMethod = TzMethod.CLOSED_FORM
    coplanar_policy: CoplanarPolicy = CoplanarPolicy.AUTO
    scenario: dict[str, t.Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.modes or not self.sigmas:
            raise InvalidConfiguration("The sweep grid is empty.")
        for mode in self.modes:
            if not self.points.get(mode):
                raise InvalidConfiguration(
                    f"No point counts given for {mode.value} scenes."
                )
        if self.trials < 1:
            raise InvalidConfiguration("trials must be at least 1.")
        seed_entropy(self.seed)

    @classmethod
    def from_mapping(
        cls, harness: t.Mapping[str, JSONVals]
    ) -> "SweepConfig":
        """Build a sweep from a mapping shaped like the harness section."""
        try:
            modes = tuple(SceneMode(mode) for mode in harness["modes"])
            n_points = list(harness["n_points"])
            points = {
                mode: tuple(n_points or harness[f"{mode.value}_points"])
                for mode in modes
            }
            return cls(
                modes=modes,
                points=points,
                sigmas=tuple(float(s) for s in harness["sigma"]),
                trials=int(harness["trials"]),
                seed=int(harness["seed"]),
                record_timings=bool(harness["record_timings"]),
                refine=bool(harness["refine"]),
                tz_method=TzMethod(harness["tz_method"]),
                coplanar_policy=CoplanarPolicy(harness["coplanar_policy"]),
                scenario=dict(
                    fov=FovSpec.from_config(),
                    projection=ProjectionModel(
                        ProjectionKind(harness["projection"])
                    ),
                    disc_radius=float(harness["disc_radius"]),
                    plane_anchor=tuple(harness["plane_anchor"]),
                    dihedral_range=(
                        math.radians(harness["dihedral_min_deg"]),
                        math.radians(harness["dihedral_max_deg"]),
                    ),
                    retry_factor=int(harness["retry_factor"]),
                ),
            )
        except (KeyError, ValueError, TypeError) as e:
            if isinstance(e, SonarPnPError):
                raise
            raise InvalidConfiguration(f"Bad sweep setting: {e}") from e

    @classmethod
    def load(
        cls,
        path: t.Optional[t.Union[str, pathlib.Path]] = None,
        **overrides: JSONVals,
    ) -> "SweepConfig":
        """
        Read a TOML or JSON file over the harness defaults.

        Keys of the file replace the defaults of the same name and must
        keep their type. overrides are applied last; None values are
        ignored, which lets CLI options that weren't given fall through.
        """
        harness = json.loads(json.dumps(config.config_data["harness"]))
        if path is not None:
            overrides_file = _read_sweep_file(pathlib.Path(path))
            try:
                merge(
                    harness, overrides_file, strategy=Strategy.TYPESAFE_REPLACE
                )
            except TypeError as e:
                raise InvalidConfiguration(f"{path}: {e}") from e
        harness.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(harness)

    @property
    def variant(self) -> str:
        return variant_name(self.refine, self.tz_method)

    def cells(self) -> list[ScenarioConfig]:
        """Return the grid cells in (mode, n_points, sigma) order."""
        return [
            ScenarioConfig(
                mode,
                n_points,
                noise_sigma=sigma,
                trials=self.trials,
                seed=self.seed,
                **self.scenario,
            )
            for mode in self.modes
            for n_points in self.points[mode]
            for sigma in self.sigmas
        ]


def _read_sweep_file(path: pathlib.Path) -> dict[str, JSONVals]:
    try:
        if path.suffix == ".toml":
            with path.open("rb") as f:
                data = tomllib.load(f)
        else:
            data = json.loads(path.read_text())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise InvalidConfiguration(f"Can't parse {path}: {e}") from e

    # A file may hold the keys at the top level or under [harness].
    data = data.get("harness", data)
    unknown = set(data) - set(config.default_config_data["harness"])
    if unknown:
        raise InvalidConfiguration(
            f"Unknown sweep settings in {path}: {', '.join(sorted(unknown))}."
        )
    # TYPESAFE_REPLACE compares exact types; accept integral floats.
    for key, default in config.default_config_data["harness"].items():
        if isinstance(default, float) and isinstance(data.get(key), int):
            data[key] = float(data[key])
    return data


@dataclasses.dataclass(slots=True, frozen=True)
class TrialTask:
    """Everything a worker needs to run one trial."""

    cell: int
    trial: int
    scenario: ScenarioConfig
    refine: bool
    tz_method: TzMethod
    coplanar_policy: CoplanarPolicy


@dataclasses.dataclass(slots=True, frozen=True)
class TrialRecord:
    """The outcome of one trial; errors are NaN when the trial failed."""

    mode: str
    n_points: int
    sigma: float
    trial: int
    cell: int = 0
    rot_err_deg: float = math.nan
    txy_err_m: float = math.nan
    tz_err_m: float = math.nan
    gap: float = math.nan
    kernel_dim: int = 0
    time_total_ms: float = math.nan
    time_sdp_ms: float = math.nan
    time_tz_ms: float = math.nan
    flags: tuple[str, ...] = ()
    failure: t.Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def csv_row(self, record_timings: bool) -> list[t.Any]:
        timings = [
            getattr(self, name) if record_timings else "" for name in TIMINGS
        ]
        return [
            self.mode,
            self.n_points,
            self.sigma,
            self.trial,
            self.rot_err_deg,
            self.txy_err_m,
            self.tz_err_m,
            self.gap,
            self.kernel_dim,
            *timings,
            ";".join(self.flags),
        ]


@dataclasses.dataclass(slots=True, frozen=True)
class SweepResult:
    config: SweepConfig
    records: list[TrialRecord]


SEED_BITS = 64


def seed_entropy(seed: int) -> int:
    """
    Map a signed 64-bit seed onto the unsigned entropy of its stream.

    Negative seeds wrap around, so -1 and 2**64 - 1 share a stream.
    """
    if not -(2 ** (SEED_BITS - 1)) <= seed < 2**SEED_BITS:
        raise InvalidConfiguration(
            f"Seed {seed} does not fit in {SEED_BITS} bits."
        )
    return seed & (2**SEED_BITS - 1)


def trial_rng(seed: int, cell: int, trial: int) -> np.random.Generator:
    """Return the random stream of one trial."""
    sequence = np.random.SeedSequence(
        entropy=seed_entropy(seed), spawn_key=(cell, trial)
    )
    return np.random.Generator(np.random.Philox(sequence))


def run_trial(task: TrialTask) -> TrialRecord:
    """
    Simulate, solve and score a single trial.

    Package errors become a record with the failure class; anything else
    is a bug and propagates.
    """
    scenario = task.scenario
    base = dict(
        mode=scenario.mode.value,
        n_points=scenario.point_count,
        sigma=scenario.noise_sigma,
        trial=task.trial,
        cell=task.cell,
    )
    rng = trial_rng(scenario.seed, task.cell, task.trial)
    flags: list[str] = []
    try:
        scene = generate_scene(scenario, rng)
        noisy, clamped = apply_polar_noise(
            scene.correspondences, scenario.noise_sigma, rng
        )
        if clamped:
            flags.append("range_clamped")
        solution = pipeline_solve(
            SolveRequest(
                noisy,
                refine=task.refine,
                coplanar_policy=task.coplanar_policy,
                tz_method=task.tz_method,
                fov=scenario.fov,
            )
        )
    except SonarPnPError as e:
        logger.debug(f"Trial {task.cell}/{task.trial} failed: {e}")
        failure = type(e).__name__
        return TrialRecord(
            **base, flags=(*flags, f"failed:{failure}"), failure=failure
        )

    pose, diagnostics = solution.pose, solution.diagnostics
    txy_error, tz_error = translation_errors(
        scene.pose.translation, pose.translation
    )
    timings = diagnostics.timings
    return TrialRecord(
        **base,
        rot_err_deg=rotation_error_deg(scene.pose.rotation, pose.rotation),
        txy_err_m=txy_error,
        tz_err_m=tz_error,
        gap=diagnostics.relative_gap,
        kernel_dim=diagnostics.kernel_dim,
        time_total_ms=timings.get("total", math.nan),
        time_sdp_ms=timings.get("dual_sdp", math.nan),
        time_tz_ms=timings.get("tz", math.nan),
        flags=(*flags, *diagnostics.flags),
    )


def default_workers() -> int:
    """Read the worker count from the environment, defaulting to one."""
    value = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        workers = int(value)
    except ValueError:
        raise InvalidConfiguration(
            f"{WORKERS_ENV_VAR} must be an integer, got {value!r}."
        ) from None
    if workers < 1:
        raise InvalidConfiguration(f"{WORKERS_ENV_VAR} must be at least 1.")
    return workers


def _quiet_worker() -> None:
    # Per-trial warnings would drown the progress bar.
    logger.remove()
    logger.add(sys.stderr, level="ERROR")


def build_tasks(cfg: SweepConfig) -> list[TrialTask]:
    return [
        TrialTask(
            cell_index,
            trial,
            scenario,
            cfg.refine,
            cfg.tz_method,
            cfg.coplanar_policy,
        )
        for cell_index, scenario in enumerate(cfg.cells())
        for trial in range(cfg.trials)
    ]


def run_sweep(
    cfg: SweepConfig,
    workers: t.Optional[int] = None,
    progress: bool = True,
) -> SweepResult:
    """Run every trial of every cell; records come back in grid order."""
    workers = workers or default_workers()
    tasks = build_tasks(cfg)
    logger.info(
        f"Running {len(tasks)} {cfg.variant} trials in "
        f"{len(tasks) // cfg.trials} cells with {workers} worker(s)."
    )

    def tracked(results: t.Iterable[TrialRecord]) -> list[TrialRecord]:
        return list(
            track(
                results,
                total=len(tasks),
                description="Sweeping...",
                console=console,
                disable=not progress,
            )
        )

    if workers == 1:
        records = tracked(map(run_trial, tasks))
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, initializer=_quiet_worker
        ) as executor:
            records = tracked(
                executor.map(
                    run_trial, tasks, chunksize=max(1, cfg.trials // 10)
                )
            )

    records.sort(key=lambda record: (record.cell, record.trial))
    failures = sum(record.failed for record in records)
    if failures:
        logger.warning(f"{failures} of {len(records)} trials failed.")
    return SweepResult(cfg, records)


def summarize(values: t.Sequence[float]) -> dict[str, t.Optional[float]]:
    """Return the median and interquartile range, ignoring NaNs."""
    finite = np.asarray(values, dtype=np.float64)
    finite = finite[np.isfinite(finite)]
    if not finite.size:
        return dict.fromkeys(("median", "q1", "q3", "iqr"))
    q1, median, q3 = np.percentile(finite, [25, 50, 75])
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "iqr": float(q3 - q1),
    }


def aggregate(result: SweepResult) -> list[dict[str, JSONVals]]:
    """Reduce the records of each cell to medians and IQRs."""
    by_cell: dict[int, list[TrialRecord]] = {}
    for record in result.records:
        by_cell.setdefault(record.cell, []).append(record)

    metrics = METRICS + (TIMINGS if result.config.record_timings else ())
    cells = []
    for cell_index in sorted(by_cell):
        records = by_cell[cell_index]
        first = records[0]
        failures: dict[str, int] = {}
        for record in records:
            if record.failed:
                failures[record.failure] = failures.get(record.failure, 0) + 1
        cells.append(
            {
                "mode": first.mode,
                "n_points": first.n_points,
                "sigma": first.sigma,
                "trials": len(records),
                "failures": failures,
                "kernel_dims": sorted(
                    {r.kernel_dim for r in records if not r.failed}
                ),
                **{
                    name: summarize([getattr(r, name) for r in records])
                    for name in metrics
                },
            }
        )
    return cells


def write_trials_csv(
    result: SweepResult, path: t.Union[str, pathlib.Path]
) -> None:
    """Write one row per trial; timing columns stay empty unless recorded."""
    with pathlib.Path(path).open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in result.records:
            writer.writerow(record.csv_row(result.config.record_timings))


def sweep_metadata(cfg: SweepConfig) -> dict[str, JSONVals]:
    return {
        "variant": cfg.variant,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "modes": [mode.value for mode in cfg.modes],
        "points": {mode.value: list(cfg.points[mode]) for mode in cfg.modes},
        "sigma": list(cfg.sigmas),
        "coplanar_policy": cfg.coplanar_policy.value,
        "projection": cfg.scenario["projection"].kind.value,
        "ground_truth_translation_frame": "sonar",
        "noise_model": "polar",
        "record_timings": cfg.record_timings,
    }


def write_summary_json(
    result: SweepResult,
    cells: list[dict[str, JSONVals]],
    path: t.Union[str, pathlib.Path],
) -> None:
    document = {"metadata": sweep_metadata(result.config), "cells": cells}
    pathlib.Path(path).write_text(
        json.dumps(document, indent=4, sort_keys=True, cls=ArrayEncoder)
        + "\n"
    )


def write_outputs(
    result: SweepResult, out_dir: t.Union[str, pathlib.Path]
) -> list[dict[str, JSONVals]]:
    """Write trials.csv and summary.json; return the aggregated cells."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = aggregate(result)
    write_trials_csv(result, out_dir / "trials.csv")
    write_summary_json(result, cells, out_dir / "summary.json")
    logger.info(f"Wrote sweep results to {out_dir}.")
    return cells
