"""Display a solved pose with its certificate."""
import typing as t

from rich.table import Table

from sonarpnp import console
from sonarpnp.harness.metrics import rotation_error_deg, translation_errors
from sonarpnp.models import Pose
from sonarpnp.pipeline import Solution

GREY = "grey50"


def _pose_table(pose: Pose) -> Table:
    table = Table(title="Pose (world -> sonar)", show_edge=False)
    table.add_column("ROTATION", justify="right")
    table.add_column("TRANSLATION", justify="right", style="bold")
    for row, value in zip(pose.rotation, pose.translation):
        table.add_row(
            "  ".join(f"{entry: .6f}" for entry in row), f"{value: .6f}"
        )
    return table


def _certificate_table(solution: Solution) -> Table:
    d = solution.diagnostics
    table = Table(title="Certificate", show_header=False, show_edge=False)
    table.add_column(style=GREY)
    table.add_column()
    certified = "[green]yes[/]" if d.certified else "[red]no[/]"
    rows = [
        ("variant", d.variant),
        ("recovery", d.path),
        ("kernel dim", str(d.kernel_dim)),
        ("dual value", f"{d.dual_value:.6g}"),
        ("duality gap", f"{d.duality_gap:.3g}"),
        ("relative gap", f"{d.relative_gap:.3g}"),
        ("certified", certified),
        ("solver", f"{d.solver_backend} ({d.solver_status})"),
    ]
    if d.refinement is not None:
        rows.append(("refinement", d.refinement.status.value))
    if d.flags:
        rows.append(("flags", f"[yellow]{', '.join(d.flags)}[/]"))
    for name, value in rows:
        table.add_row(name, value)
    return table


def _timing_table(timings: t.Mapping[str, float]) -> Table:
    table = Table(title="Timings", show_edge=False)
    table.add_column("STAGE", style=GREY)
    table.add_column("MS", justify="right")
    for name, value in timings.items():
        table.add_row(name, f"{value:.2f}")
    return table


def print_solution(
    solution: Solution, ground_truth: t.Optional[Pose] = None
) -> None:
    """Print the pose, its certificate and stage timings as tables."""
    console.print(_pose_table(solution.pose))
    console.print(_certificate_table(solution))
    console.print(_timing_table(solution.diagnostics.timings))
    if ground_truth is None:
        return

    txy, tz = translation_errors(
        ground_truth.translation, solution.pose.translation
    )
    rotation = rotation_error_deg(
        ground_truth.rotation, solution.pose.rotation
    )
    table = Table(title="Error against ground truth", show_edge=False)
    for column in ("ROTATION (DEG)", "T_XY (M)", "T_Z (M)"):
        table.add_column(column, justify="right")
    table.add_row(f"{rotation:.4f}", f"{txy:.4g}", f"{tz:.4g}")
    console.print(table)
