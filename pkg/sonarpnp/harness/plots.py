"""SVG line plots of aggregated sweep cells."""
import pathlib
import typing as t

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from loguru import logger  # noqa: E402

from sonarpnp.harness.sweep import METRICS  # noqa: E402
from sonarpnp.type_aliases import JSONVals  # noqa: E402

Cell = t.Mapping[str, JSONVals]

AXES = {"n_points": "sigma", "sigma": "n_points"}
LABELS = {
    "n_points": "Number of points",
    "sigma": "Noise sigma (m, rad)",
    "rot_err_deg": "Rotation error (deg)",
    "txy_err_m": "t_xy error (m)",
    "tz_err_m": "t_z error (m)",
    "gap": "Relative duality gap",
}

# Fixed ids keep reruns byte-identical.
plt.rcParams["svg.hashsalt"] = "sonarpnp"


def _series(
    cells: t.Iterable[Cell], axis: str, metric: str
) -> dict[t.Any, list[tuple[float, float, float, float]]]:
    """Group cells into lines of (x, median, q1, q3) along axis."""
    lines: dict[t.Any, list[tuple[float, float, float, float]]] = {}
    for cell in cells:
        stats = cell[metric]
        if stats["median"] is None:
            continue
        lines.setdefault(cell[AXES[axis]], []).append(
            (cell[axis], stats["median"], stats["q1"], stats["q3"])
        )
    return {key: sorted(points) for key, points in sorted(lines.items())}


def plot_cells(
    cells: t.Sequence[Cell], out_dir: t.Union[str, pathlib.Path]
) -> list[pathlib.Path]:
    """
    Draw the median with an IQR band for every mode, axis and metric.

    An axis is plotted only if the sweep has more than one value on it.
    Returns the written files.
    """
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for mode in sorted({cell["mode"] for cell in cells}):
        mode_cells = [cell for cell in cells if cell["mode"] == mode]
        for axis, legend in AXES.items():
            if len({cell[axis] for cell in mode_cells}) < 2:
                continue
            for metric in METRICS:
                series = _series(mode_cells, axis, metric)
                if not series:
                    continue

                fig, ax = plt.subplots(figsize=(6, 4))
                for key, points in series.items():
                    x, median, q1, q3 = zip(*points)
                    ax.plot(x, median, marker="o", label=f"{legend}={key}")
                    ax.fill_between(x, q1, q3, alpha=0.2)
                if axis == "n_points":
                    ax.set_xscale("log")
                if metric == "gap":
                    ax.set_yscale("symlog", linthresh=1e-9)
                ax.set_xlabel(LABELS[axis])
                ax.set_ylabel(LABELS[metric])
                ax.set_title(f"{mode}: {LABELS[metric]}")
                ax.grid(True, alpha=0.3)
                ax.legend(fontsize="small")
                fig.tight_layout()

                path = out_dir / f"{mode}_{metric}_vs_{axis}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(path)

    logger.info(f"Wrote {len(written)} plots to {out_dir}.")
    return written
