import csv
import json
import typing as t

import pytest
from click.testing import CliRunner
from loguru import logger

from sonarpnp import cli, config
from sonarpnp.errors import NoRealSolution


@pytest.fixture
def runner() -> t.Iterator[CliRunner]:
    yield CliRunner()
    # Sinks added by the CLI point at the runner's closed streams.
    logger.remove()


@pytest.fixture
def instance_path(runner, tmp_path):
    path = tmp_path / "instance.json"
    result = runner.invoke(
        cli.app,
        ["--log", "error", "gen", "-n", "12", "--seed", "4"]
        + ["-o", str(path)],
    )
    assert result.exit_code == 0, result.output
    return path


def test_gen_writes_a_loadable_instance(instance_path) -> None:
    data = json.loads(instance_path.read_text())
    assert len(data["world_points"]) == 12
    assert data["meta"]["seed"] == 4
    assert data["meta"]["ground_truth_translation_frame"] == "sonar"
    assert set(data["ground_truth"]) == {"rotation_rows", "translation"}


def test_gen_prints_to_stdout_by_default(runner) -> None:
    result = runner.invoke(
        cli.app, ["--log", "error", "gen", "--mode", "coplanar", "-n", "5"]
    )
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["meta"]["mode"] == "coplanar"


def test_gen_rejects_too_few_points(runner) -> None:
    result = runner.invoke(cli.app, ["--log", "error", "gen", "-n", "3"])
    assert result.exit_code == 1
    assert "InvalidConfiguration" in result.output


def test_gen_accepts_negative_seeds(runner) -> None:
    args = ["--log", "error", "gen", "-n", "6", "--seed", "-1"]
    first = runner.invoke(cli.app, args)
    assert first.exit_code == 0, first.output
    assert json.loads(first.stdout)["meta"]["seed"] == -1
    assert runner.invoke(cli.app, args).stdout == first.stdout


def test_sweep_rejects_oversized_seeds(runner, tmp_path) -> None:
    result = runner.invoke(
        cli.app,
        ["--log", "error", "sweep", "--seed", str(2**64)]
        + ["--out-dir", str(tmp_path)],
    )
    assert result.exit_code == 1
    assert "InvalidConfiguration" in result.output


def test_solve_prints_json(runner, instance_path) -> None:
    result = runner.invoke(
        cli.app,
        ["--log", "error", "solve", "-i", str(instance_path)]
        + ["--format", "json"],
    )
    assert result.exit_code == 0, result.output
    solution = json.loads(result.stdout)
    assert len(solution["pose"]["rotation_rows"]) == 3
    assert solution["diagnostics"]["kernel_dim"] == 1
    assert solution["diagnostics"]["variant"] == "PtL"


def test_solve_prints_csv(runner, instance_path) -> None:
    result = runner.invoke(
        cli.app,
        [
            "--log",
            "error",
            "solve",
            "-i",
            str(instance_path),
            "--refine",
            "--format",
            "csv",
        ],
    )
    assert result.exit_code == 0, result.output
    header, row = csv.reader(result.stdout.splitlines())
    assert header[:3] == ["r11", "r12", "r13"]
    assert header[-1] == "flags"
    assert len(row) == len(header)


def test_solve_writes_json_files(runner, instance_path, tmp_path) -> None:
    output = tmp_path / "solution.json"
    result = runner.invoke(
        cli.app,
        ["--log", "error", "solve", "-i", str(instance_path)]
        + ["-o", str(output)],
    )
    assert result.exit_code == 0, result.output
    assert "diagnostics" in json.loads(output.read_text())


def test_solve_prints_tables(runner, instance_path) -> None:
    result = runner.invoke(
        cli.app, ["--log", "error", "solve", "-i", str(instance_path)]
    )
    assert result.exit_code == 0, result.output
    assert result.output


def test_malformed_instances_exit_with_1(runner, tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps({"world_points": [[1, 2]], "measurements": [[1, 2]]})
    )
    result = runner.invoke(
        cli.app, ["--log", "error", "solve", "-i", str(path)]
    )
    assert result.exit_code == 1
    assert "InstanceFormatError" in result.output
    assert "world_points[0]" in result.output


def test_solver_errors_exit_with_2(
    runner, instance_path, monkeypatch
) -> None:
    def fail(request):
        raise NoRealSolution("the quartic has no real minimum", stage="tz")

    monkeypatch.setattr(cli, "pipeline_solve", fail)
    result = runner.invoke(
        cli.app, ["--log", "error", "solve", "-i", str(instance_path)]
    )
    assert result.exit_code == 2
    assert "NoRealSolution" in result.output
    assert "[tz]" in result.output


def test_sweep_writes_results(runner, tmp_path) -> None:
    settings = tmp_path / "sweep.json"
    settings.write_text(
        json.dumps({"n_points": [7], "sigma": [0.0, 0.01], "trials": 1})
    )
    out_dir = tmp_path / "results"
    result = runner.invoke(
        cli.app,
        [
            "--log",
            "error",
            "sweep",
            "-c",
            str(settings),
            "--seed",
            "2",
            "--out-dir",
            str(out_dir),
            "--plots",
            "-w",
            "1",
        ],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["metadata"]["seed"] == 2
    assert len(summary["cells"]) == 2
    assert (out_dir / "trials.csv").exists()
    assert len(list((out_dir / "plots").glob("*.svg"))) == 4


def test_sweep_rejects_bad_settings(runner, tmp_path) -> None:
    settings = tmp_path / "sweep.toml"
    settings.write_text("unknown_key = 1\n")
    result = runner.invoke(
        cli.app, ["--log", "error", "sweep", "-c", str(settings)]
    )
    assert result.exit_code == 1
    assert "unknown_key" in result.output


# region Config


def test_config_get(runner) -> None:
    result = runner.invoke(cli.app, ["config", "get", "solver.rank_tol"])
    assert result.exit_code == 0, result.output
    assert result.output.strip() == "1e-06"


def test_config_get_rejects_unknown_keys(runner) -> None:
    result = runner.invoke(cli.app, ["config", "get", "solver.nope"])
    assert result.exit_code == 2
    assert "not a valid config key" in result.output


def test_config_set_and_unset(runner) -> None:
    result = runner.invoke(cli.app, ["config", "set", "harness.trials", "50"])
    assert result.exit_code == 0, result.output
    assert config.config_data["harness.trials"] == 50
    assert config.Harness.trials == 50
    saved = json.loads(config.USER_CONFIG_PATH.read_text())
    assert saved == {"harness": {"trials": 50}}

    result = runner.invoke(cli.app, ["config", "unset", "harness.trials"])
    assert result.exit_code == 0, result.output
    assert config.config_data["harness.trials"] == 300
    assert json.loads(config.USER_CONFIG_PATH.read_text()) == {}


def test_config_set_parses_lists(runner) -> None:
    result = runner.invoke(
        cli.app, ["config", "set", "harness.sigma", "[0.0, 0.02]"]
    )
    assert result.exit_code == 0, result.output
    assert config.config_data["harness.sigma"] == [0.0, 0.02]

    result = runner.invoke(cli.app, ["config", "set", "harness.sigma", "0.1"])
    assert result.exit_code == 2
    assert "not a JSON list" in result.output


def test_config_set_converts_scalars(runner) -> None:
    result = runner.invoke(
        cli.app, ["config", "set", "harness.refine", "yes"]
    )
    assert result.exit_code == 0, result.output
    assert config.config_data["harness.refine"] is True

    result = runner.invoke(
        cli.app, ["config", "set", "solver.rank_tol", "small"]
    )
    assert result.exit_code == 2


def test_config_refuses_sections(runner) -> None:
    result = runner.invoke(cli.app, ["config", "set", "solver", "1"])
    assert result.exit_code == 2
    assert "is a section" in result.output


def test_config_unset_needs_a_local_value(runner) -> None:
    result = runner.invoke(cli.app, ["config", "unset", "harness.seed"])
    assert result.exit_code == 2
    assert "has not been set" in result.output


# endregion
