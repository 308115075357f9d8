"""
Constrained iterative refinement of the exact reprojection objective.

The PtL estimate carries the orthographic approximation's bias. Here
the arc model is fitted directly over all six pose parameters with a
damped Gauss-Newton loop: rotation increments are applied on the left
through the exponential map, translation increments additively. The
elevation band phi_min <= phi_i <= phi_max is either enforced by a
quadratic penalty or by dropping the offending points from the fit,
and only once the unconstrained fit is seen to leave it.
"""
import dataclasses
import enum
import typing as t

import numpy as np
from loguru import logger

from sonarpnp import config
from sonarpnp.errors import InvalidConfiguration
from sonarpnp.geometry import elevation, project_arc, transform
from sonarpnp.models import CorrespondenceSet, FovSpec, Pose
from sonarpnp.rotations import exp_so3, project_to_so3, skew
from sonarpnp.type_aliases import FloatArray


class ConstraintMode(enum.Enum):
    """How the elevation band takes part in the fit."""

    PENALTY = "penalty"
    PROJECTION = "projection"
    NONE = "none"


class RefinementStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    NOT_IMPROVED = "not_improved"


@dataclasses.dataclass(slots=True, frozen=True)
class RefinementConfig:
    """Stopping rules, damping and constraint handling of the refinement."""

    max_iterations: int = 100
    step_tolerance: float = 1e-10
    residual_tolerance: float = 1e-12
    elevation_bounds: tuple[float, float] = (-np.pi / 18, np.pi / 18)
    constraint_mode: ConstraintMode = ConstraintMode.PENALTY
    initial_damping: float = 1e-3
    max_damping: float = 1e10
    penalty_weight: float = 1.0
    max_penalty_ramps: int = 3

    def __post_init__(self) -> None:
        for name in (
            "step_tolerance",
            "residual_tolerance",
            "initial_damping",
            "max_damping",
            "penalty_weight",
        ):
            config.positive(name, getattr(self, name))
        if self.max_iterations < 1:
            raise InvalidConfiguration("max_iterations must be at least 1.")
        low, high = self.elevation_bounds
        if not low < high:
            raise InvalidConfiguration(
                f"Elevation bounds must be increasing, got {low}, {high}."
            )

    @classmethod
    def from_config(
        cls, fov: t.Optional[FovSpec] = None, **overrides: t.Any
    ) -> "RefinementConfig":
        """Build the config from the refinement section and a FoV."""
        fov = fov or FovSpec.from_config()
        values = dict(
            max_iterations=config.Refinement.max_iterations,
            step_tolerance=config.Refinement.step_tolerance,
            residual_tolerance=config.Refinement.residual_tolerance,
            elevation_bounds=fov.elevation_band,
            constraint_mode=ConstraintMode(
                config.Refinement.constraint_mode
            ),
            initial_damping=config.Refinement.initial_damping,
            max_damping=config.Refinement.max_damping,
            penalty_weight=config.Refinement.penalty_weight,
            max_penalty_ramps=config.Refinement.max_penalty_ramps,
        )
        values.update(overrides)
        return cls(**values)


@dataclasses.dataclass(slots=True, frozen=True)
class RefinementReport:
    status: RefinementStatus
    iterations: int
    initial_cost: float
    final_cost: float
    cost_history: tuple[float, ...]
    penalty_weight: float
    rejections: int = 0
    ramp_starts: tuple[int, ...] = ()
    ramp_costs: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        report = dataclasses.asdict(self)
        report["status"] = self.status.value
        return report


def reprojection_residual(
    pose: Pose, c: CorrespondenceSet
) -> tuple[FloatArray, float]:
    """
    Return the per-point arc-model residuals and their squared sum.

    Residual i is M_p(R p_i + t) - m_i with the exact 1 / cos(phi_i)
    scaling, shape (N, 2).
    """
    residuals = project_arc(transform(pose, c.world_points)) - c.measurements
    return residuals, float(np.sum(residuals**2))


def reprojection_cost(pose: Pose, c: CorrespondenceSet) -> float:
    """Return the squared reprojection error of a pose."""
    return reprojection_residual(pose, c)[1]


def arc_jacobian(points: FloatArray) -> FloatArray:
    """
    Return d M_p(s) / d s for sonar-frame points, shape (N, 2, 3).

    With rho = |s_xy|, n = |s| and k = n / rho:
    d/ds_xy = k I - z^2 s_xy s_xy^T / (n rho^3), d/dz = s_xy z / (n rho).
    """
    xy, z = points[:, :2], points[:, 2]
    rho = np.linalg.norm(xy, axis=1)
    n = np.linalg.norm(points, axis=1)
    jacobian = np.zeros((len(points), 2, 3))
    jacobian[:, :, :2] = (n / rho)[:, None, None] * np.eye(2) - (
        (z**2 / (n * rho**3))[:, None, None]
        * np.einsum("ni,nj->nij", xy, xy)
    )
    jacobian[:, :, 2] = xy * (z / (n * rho))[:, None]
    return jacobian


def elevation_jacobian(points: FloatArray) -> FloatArray:
    """Return d phi / d s for sonar-frame points, shape (N, 3)."""
    rho = np.linalg.norm(points[:, :2], axis=1)
    n2 = np.einsum("ij,ij->i", points, points)
    gradient = -(points[:, 2] / (rho * n2))[:, None] * points
    gradient[:, 2] += 1 / rho
    return gradient


def band_violation(
    phi: FloatArray, bounds: tuple[float, float]
) -> tuple[FloatArray, FloatArray]:
    """Return how far each phi lies outside the band and the sign of d/dphi."""
    below = np.maximum(bounds[0] - phi, 0.0)
    above = np.maximum(phi - bounds[1], 0.0)
    sign = np.where(below > 0, -1.0, np.where(above > 0, 1.0, 0.0))
    return below + above, sign


class _Objective:
    """The stacked residual vector and its Jacobian at a pose."""

    def __init__(
        self,
        c: CorrespondenceSet,
        cfg: RefinementConfig,
        mode: ConstraintMode,
    ) -> None:
        self.c = c
        self.cfg = cfg
        self.mode = mode
        self.weight = cfg.penalty_weight

    def evaluate(
        self, pose: Pose, jacobian: bool = True
    ) -> tuple[FloatArray, t.Optional[FloatArray]]:
        rotated = self.c.world_points @ pose.rotation.T
        points = rotated + pose.translation
        residuals = project_arc(points) - self.c.measurements
        violation, sign = band_violation(
            elevation(points), self.cfg.elevation_bounds
        )

        if self.mode is ConstraintMode.NONE:
            stacked = residuals.reshape(-1)
        elif self.mode is ConstraintMode.PROJECTION:
            residuals[violation > 0] = 0.0
            stacked = residuals.reshape(-1)
        else:
            stacked = np.concatenate(
                (residuals.reshape(-1), np.sqrt(self.weight) * violation)
            )
        if not jacobian:
            return stacked, None

        # d s / d(omega, t) = [-[R p]x, I]
        point_jacobian = np.zeros((len(points), 3, 6))
        point_jacobian[:, :, :3] = -np.array([skew(p) for p in rotated])
        point_jacobian[:, :, 3:] = np.eye(3)
        rows = np.einsum("nij,njk->nik", arc_jacobian(points), point_jacobian)

        if self.mode is ConstraintMode.PROJECTION:
            rows[violation > 0] = 0.0
        if self.mode is not ConstraintMode.PENALTY:
            return stacked, rows.reshape(-1, 6)

        penalty_rows = np.einsum(
            "n,ni,nik->nk",
            np.sqrt(self.weight) * sign,
            elevation_jacobian(points),
            point_jacobian,
        )
        return stacked, np.vstack((rows.reshape(-1, 6), penalty_rows))

    def violated(self, pose: Pose) -> bool:
        phi = elevation(transform(pose, self.c.world_points))
        violation, _ = band_violation(phi, self.cfg.elevation_bounds)
        return bool(np.any(violation > 1e-12))


def _retract(pose: Pose, step: FloatArray) -> Pose:
    rotation = project_to_so3(exp_so3(step[:3]) @ pose.rotation)
    return Pose(rotation, pose.translation + step[3:])


@dataclasses.dataclass(slots=True)
class _Run:
    """One damped Gauss-Newton descent of a fixed objective."""

    pose: Pose
    iterations: int = 0
    rejections: int = 0
    exhausted: bool = False
    converged: bool = False
    history: list[float] = dataclasses.field(default_factory=list)
    ramp_starts: list[int] = dataclasses.field(default_factory=list)
    ramp_costs: list[float] = dataclasses.field(default_factory=list)


def _descend(
    objective: _Objective, start: Pose, cfg: RefinementConfig
) -> _Run:
    """
    Run LM from start until it stalls or max_iterations steps are accepted.

    A rejected step only raises the damping; once the damping passes
    max_damping the objective is taken as stationary. In penalty mode a
    stationary pose that still leaves the band raises the weight and
    the descent continues under the new objective.
    """
    run = _Run(start)
    residual, jacobian = objective.evaluate(start)
    cost = float(residual @ residual)
    run.history.append(cost)
    damping = cfg.initial_damping

    while run.iterations < cfg.max_iterations:
        if cost <= cfg.residual_tolerance:
            run.converged = True
            break
        normal = jacobian.T @ jacobian
        gradient = jacobian.T @ residual
        try:
            step = np.linalg.solve(normal + damping * np.eye(6), -gradient)
        except np.linalg.LinAlgError:
            step = None

        accepted = False
        if step is not None:
            candidate = _retract(run.pose, step)
            candidate_residual, candidate_jacobian = objective.evaluate(
                candidate
            )
            candidate_cost = float(candidate_residual @ candidate_residual)
            if candidate_cost < cost:
                decrease = cost - candidate_cost
                run.pose, residual, jacobian = (
                    candidate,
                    candidate_residual,
                    candidate_jacobian,
                )
                cost = candidate_cost
                run.history.append(cost)
                run.iterations += 1
                damping = max(damping / 10, 1e-15)
                small_step = np.linalg.norm(step) <= cfg.step_tolerance * (
                    1 + np.linalg.norm(run.pose.translation)
                )
                if not (small_step or decrease <= cfg.residual_tolerance):
                    continue
                accepted = True

        if not accepted:
            run.rejections += 1
            damping *= 10
            if damping <= cfg.max_damping:
                continue
            run.exhausted = True

        # Stationary for the current penalty weight.
        if (
            objective.mode is ConstraintMode.PENALTY
            and len(run.ramp_starts) < cfg.max_penalty_ramps
            and objective.violated(run.pose)
        ):
            objective.weight *= 10
            damping = cfg.initial_damping
            residual, jacobian = objective.evaluate(run.pose)
            cost = float(residual @ residual)
            run.ramp_starts.append(len(run.history))
            run.ramp_costs.append(cost)
            logger.debug(f"Penalty weight raised to {objective.weight:g}.")
            continue
        run.converged = True
        break
    return run


def cio_refine(
    initial: Pose,
    c: CorrespondenceSet,
    cfg: t.Optional[RefinementConfig] = None,
) -> tuple[Pose, RefinementReport]:
    """
    Refine a pose against the arc-model reprojection error.

    The arc model is fitted without the elevation band first. If that
    fit keeps every point inside the band it is the result; otherwise
    the band is enforced per constraint_mode in a second descent from
    the initial pose. Only accepted steps count as iterations.

    Accepted costs never increase under a fixed penalty weight: the
    history restarts at each index in ramp_starts, and the cost
    re-evaluated after a ramp goes to ramp_costs. If the final
    reprojection error is worse than the initial one, the initial pose
    comes back with status NOT_IMPROVED.
    """
    cfg = cfg or RefinementConfig.from_config()
    flags: list[str] = []
    band = _Objective(c, cfg, cfg.constraint_mode)
    if band.violated(initial):
        flags.append("infeasible_start")

    run = _descend(_Objective(c, cfg, ConstraintMode.NONE), initial, cfg)
    iterations, rejections = run.iterations, run.rejections
    if cfg.constraint_mode is not ConstraintMode.NONE and band.violated(
        run.pose
    ):
        logger.debug("Unconstrained fit leaves the elevation band.")
        flags.append("band_active")
        if (
            cfg.constraint_mode is ConstraintMode.PROJECTION
            and "infeasible_start" in flags
        ):
            logger.warning(
                "Initial pose violates the elevation band; "
                "refining with the penalty instead."
            )
            band = _Objective(c, cfg, ConstraintMode.PENALTY)
            flags.append("penalty_fallback")
        run = _descend(band, initial, cfg)
        iterations += run.iterations
        rejections += run.rejections
        if run.ramp_starts:
            flags.append("penalty_ramped")

    pose = run.pose
    status = (
        RefinementStatus.CONVERGED
        if run.converged
        else RefinementStatus.MAX_ITERATIONS
    )
    if run.iterations == 0 and run.exhausted:
        status = RefinementStatus.NOT_IMPROVED
    initial_cost = reprojection_cost(initial, c)
    final_cost = reprojection_cost(pose, c)
    if final_cost > initial_cost:
        logger.warning(
            f"Refinement raised the reprojection cost from "
            f"{initial_cost:.3g} to {final_cost:.3g}; keeping the start."
        )
        pose, final_cost = initial, initial_cost
        status = RefinementStatus.NOT_IMPROVED
    if cfg.constraint_mode is not ConstraintMode.NONE and band.violated(
        pose
    ):
        flags.append("band_violated")

    logger.debug(
        f"Refinement {status.value} after {iterations} steps "
        f"({rejections} rejected), cost {initial_cost:.3g} -> "
        f"{final_cost:.3g}."
    )
    return pose, RefinementReport(
        status=status,
        iterations=iterations,
        rejections=rejections,
        initial_cost=initial_cost,
        final_cost=final_cost,
        cost_history=tuple(run.history),
        ramp_starts=tuple(run.ramp_starts),
        ramp_costs=tuple(run.ramp_costs),
        penalty_weight=band.weight,
        flags=tuple(flags),
    )
