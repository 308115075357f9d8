"""
Translation along the sonar's z-axis.

The orthographic reduction is blind to t_z. Ranges are not: with
s_i = R p_i + [t_x, t_y, 0] every point must satisfy
|s_i + t_z e_z|^2 = |m_i|^2, and the mean squared violation of those
range equations is a quartic in t_z with unit leading coefficient.
"""
import dataclasses
import typing as t

import numpy as np
from loguru import logger
from scipy import optimize

from sonarpnp import config
from sonarpnp.errors import DegenerateInput, NumericalFailure
from sonarpnp.models import CorrespondenceSet, Pose
from sonarpnp.solvers.refinement import reprojection_cost
from sonarpnp.type_aliases import FloatArray

#: Scores a candidate t_z; higher is better. Used to break ties.
TieScore = t.Callable[[float], float]


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class QuarticObjective:
    """L(t_z) = c4 t^4 + c3 t^3 + c2 t^2 + c1 t + c0 with c4 = 1."""

    coefficients: FloatArray

    def __post_init__(self) -> None:
        coefficients = np.asarray(self.coefficients, dtype=np.float64)
        finite = np.all(np.isfinite(coefficients))
        if coefficients.shape != (5,) or not finite:
            raise NumericalFailure(
                f"Quartic needs 5 finite coefficients, got {coefficients}."
            )
        if coefficients[0] != 1.0:
            raise NumericalFailure(
                f"Quartic is not normalized: c4 = {coefficients[0]}."
            )
        object.__setattr__(self, "coefficients", coefficients)

    def __call__(self, tz: t.Union[float, FloatArray]) -> FloatArray:
        return np.polyval(self.coefficients, tz)

    def derivative(self, order: int = 1) -> FloatArray:
        """Return the order-th derivative, highest power first."""
        return np.polyder(self.coefficients, order)


@dataclasses.dataclass(slots=True, frozen=True)
class TzResult:
    """The chosen t_z and how it was picked."""

    tz: float
    value: float
    stationary_points: tuple[float, ...] = ()
    stationary_values: tuple[float, ...] = ()
    tie: bool = False
    alternatives: tuple[float, ...] = ()
    method: str = "closed"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def range_equation_terms(
    rotation: FloatArray, t_xy: FloatArray, c: CorrespondenceSet
) -> tuple[FloatArray, FloatArray]:
    """
    Return (a_i, b_i) with e_i(t) = t^2 + 2 b_i t + a_i.

    b_i is the z-coordinate of s_i and a_i = |s_i|^2 - |m_i|^2.
    """
    shifted = c.world_points @ rotation.T
    shifted[:, :2] += t_xy
    b = shifted[:, 2]
    a = np.einsum("ij,ij->i", shifted, shifted) - np.einsum(
        "ij,ij->i", c.measurements, c.measurements
    )
    return a, b


def build_quartic(
    rotation: FloatArray, t_xy: FloatArray, c: CorrespondenceSet
) -> QuarticObjective:
    """
    Expand the mean of e_i(t)^2 over the correspondences.

    e^2 = t^4 + 4b t^3 + (4b^2 + 2a) t^2 + 4ab t + a^2.
    """
    a, b = range_equation_terms(rotation, np.asarray(t_xy), c)
    coefficients = np.array(
        [
            1.0,
            np.mean(4 * b),
            np.mean(4 * b**2 + 2 * a),
            np.mean(4 * a * b),
            np.mean(a**2),
        ]
    )
    return QuarticObjective(coefficients)


def _newton_polish(q: QuarticObjective, roots: FloatArray) -> FloatArray:
    first, second = q.derivative(1), q.derivative(2)
    polished = roots.copy()
    for _ in range(3):
        slope = np.polyval(second, polished)
        safe = np.abs(slope) > 1e-300
        polished[safe] -= np.polyval(first, polished[safe]) / slope[safe]
    return polished


def minimize_quartic(
    q: QuarticObjective,
    *,
    tie_score: t.Optional[TieScore] = None,
    tie_tol: t.Optional[float] = None,
    imag_tol: t.Optional[float] = None,
) -> TzResult:
    """
    Return the global minimizer of a unit-leading quartic.

    All real roots of L' come from its companion matrix; those with
    L'' > 0 compete on L. Minimizers within tie_tol of each other are
    ranked by tie_score (higher first), then by closeness to zero, then
    by value, and the tie is recorded.
    """
    tie_tol = config.Tz.tie_tol if tie_tol is None else tie_tol
    imag_tol = config.Tz.imag_tol if imag_tol is None else imag_tol

    roots = np.roots(q.derivative(1))
    real = roots[np.abs(roots.imag) <= imag_tol * (1 + np.abs(roots))].real
    if not len(real):
        raise NumericalFailure(
            f"Quartic {q.coefficients} has no real stationary point."
        )
    stationary = np.unique(_newton_polish(q, np.sort(real)))
    values = q(stationary)

    curvature = np.polyval(q.derivative(2), stationary)
    minima = stationary[curvature > 0]
    if not len(minima):
        # A flat double root leaves L'' at rounding level; L decides.
        minima = stationary
    minima_values = q(minima)

    best_value = float(np.min(minima_values))
    slack = tie_tol * (1 + abs(best_value))
    tied = minima[minima_values <= best_value + slack]
    tie = len(tied) > 1

    def rank(tz: float) -> tuple[float, float, float]:
        score = tie_score(tz) if tie_score is not None else 0.0
        return -score, abs(tz), tz

    ordered = sorted((float(tz) for tz in tied), key=rank)
    if tie:
        logger.debug(f"t_z minimizers tied at {ordered}; chose {ordered[0]}.")

    return TzResult(
        tz=ordered[0],
        value=float(q(ordered[0])),
        stationary_points=tuple(float(s) for s in stationary),
        stationary_values=tuple(float(v) for v in values),
        tie=tie,
        alternatives=tuple(ordered[1:]),
    )


def optimize_tz(
    rotation: FloatArray,
    t_xy: FloatArray,
    c: CorrespondenceSet,
    *,
    grid_size: t.Optional[int] = None,
) -> TzResult:
    """
    Minimize the arc-model reprojection cost over t_z alone.

    R and t_xy stay fixed. A grid over a range that brackets every
    plausible t_z finds the basin, a bounded scalar search refines it.
    """
    grid_size = (
        config.Tz.optimize_grid_size if grid_size is None else grid_size
    )
    rotated = c.world_points @ rotation.T
    bound = (
        float(np.max(np.linalg.norm(c.measurements, axis=1)))
        + float(np.max(np.abs(rotated[:, 2])))
        + 1.0
    )

    def cost(tz: float) -> float:
        pose = Pose(rotation, np.array([t_xy[0], t_xy[1], tz]))
        try:
            return reprojection_cost(pose, c)
        except DegenerateInput:
            return np.inf

    grid = np.linspace(-bound, bound, grid_size)
    values = np.array([cost(tz) for tz in grid])
    best = int(np.argmin(values))
    step = grid[1] - grid[0]
    result = optimize.minimize_scalar(
        cost,
        bounds=(grid[best] - step, grid[best] + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    tz, value = float(result.x), float(result.fun)
    if values[best] < value:
        tz, value = float(grid[best]), float(values[best])
    return TzResult(tz=tz, value=value, method="opt")
