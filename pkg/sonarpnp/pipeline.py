"""
The end-to-end pose solver.

Stages, in order: build the PtL cost, eliminate the translation, solve
the dual SDP, recover R from the certificate kernel (one or two
dimensional), recover t_xy, recover t_z and optionally refine against
the exact sonar model. Every stage is timed, and errors leaving a stage
carry its name.
"""
import contextlib
import dataclasses
import enum
import time
import typing as t

import numpy as np
from loguru import logger

from sonarpnp import config
from sonarpnp.errors import SonarPnPError
from sonarpnp.geometry import in_elevation_band, transform
from sonarpnp.models import CorrespondenceSet, FovSpec, Pose
from sonarpnp.solvers import coplanar, ptl
from sonarpnp.solvers import tz as tz_solver
from sonarpnp.solvers.refinement import (
    RefinementConfig,
    RefinementReport,
    RefinementStatus,
    cio_refine,
    reprojection_cost,
)
from sonarpnp.solvers.sdp import DualSolution, solve_dual_sdp
from sonarpnp.type_aliases import FloatArray


class CoplanarPolicy(enum.Enum):
    """Which rotation recovery runs after the dual solve."""

    AUTO = "auto"
    FORCE_GENERAL = "general"
    FORCE_COPLANAR = "coplanar"


class TzMethod(enum.Enum):
    """How t_z is recovered."""

    CLOSED_FORM = "closed"
    OPTIMIZE = "opt"


def variant_name(refine: bool, tz_method: TzMethod) -> str:
    """Return the method name, e.g. PtL-Otz-CIO."""
    name = "PtL"
    if tz_method is TzMethod.OPTIMIZE:
        name += "-Otz"
    if refine:
        name += "-CIO"
    return name


@dataclasses.dataclass(slots=True, frozen=True)
class SolveRequest:
    """A correspondence set and the options of one solve."""

    correspondences: CorrespondenceSet
    refine: bool = False
    coplanar_policy: CoplanarPolicy = CoplanarPolicy.AUTO
    tz_method: TzMethod = TzMethod.CLOSED_FORM
    fov: t.Optional[FovSpec] = None
    refinement: t.Optional[RefinementConfig] = None

    def __post_init__(self) -> None:
        coplanar_hint = {
            CoplanarPolicy.AUTO: None,
            CoplanarPolicy.FORCE_GENERAL: False,
            CoplanarPolicy.FORCE_COPLANAR: True,
        }[self.coplanar_policy]
        self.correspondences.check_size(coplanar_hint)

    @property
    def variant(self) -> str:
        return variant_name(self.refine, self.tz_method)


@dataclasses.dataclass(slots=True)
class Diagnostics:
    """Everything a solve learned on the way to its pose."""

    variant: str
    path: str = "general"
    kernel_dim: int = 0
    dual_value: float = float("nan")
    duality_gap: float = float("nan")
    relative_gap: float = float("nan")
    certified: bool = False
    solver_status: str = ""
    solver_backend: str = ""
    alpha_candidates: int = 0
    mirror_tie: bool = False
    alternate_pose: t.Optional[Pose] = None
    tz: t.Optional[tz_solver.TzResult] = None
    pre_refinement_pose: t.Optional[Pose] = None
    refinement: t.Optional[RefinementReport] = None
    timings: dict[str, float] = dataclasses.field(default_factory=dict)
    flags: list[str] = dataclasses.field(default_factory=list)

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def as_dict(self) -> dict[str, t.Any]:
        """Return a JSON-ready summary."""

        def pose_dict(pose: t.Optional[Pose]) -> t.Optional[dict]:
            if pose is None:
                return None
            return {
                "rotation_rows": pose.rotation.tolist(),
                "translation": pose.translation.tolist(),
            }

        return {
            "variant": self.variant,
            "path": self.path,
            "kernel_dim": self.kernel_dim,
            "dual_value": self.dual_value,
            "duality_gap": self.duality_gap,
            "relative_gap": self.relative_gap,
            "certified": self.certified,
            "solver_status": self.solver_status,
            "solver_backend": self.solver_backend,
            "alpha_candidates": self.alpha_candidates,
            "mirror_tie": self.mirror_tie,
            "alternate_pose": pose_dict(self.alternate_pose),
            "tz": self.tz.as_dict() if self.tz else None,
            "pre_refinement_pose": pose_dict(self.pre_refinement_pose),
            "refinement": (
                self.refinement.as_dict() if self.refinement else None
            ),
            "timings_ms": dict(self.timings),
            "flags": list(self.flags),
        }


@dataclasses.dataclass(slots=True, frozen=True)
class Solution:
    pose: Pose
    diagnostics: Diagnostics


@contextlib.contextmanager
def stage(name: str, timings: dict[str, float]) -> t.Iterator[None]:
    """
    Time a pipeline stage and label errors that escape it.

    Repeated stages accumulate their time.
    """
    start = time.perf_counter()
    try:
        yield
    except SonarPnPError as e:
        if e.stage is None:
            e.stage = name
        raise
    finally:
        elapsed = (time.perf_counter() - start) * 1000
        timings[name] = timings.get(name, 0.0) + elapsed


def visible_count(
    pose: Pose, c: CorrespondenceSet, band: tuple[float, float]
) -> int:
    """Count points inside the elevation band and in front of the sonar."""
    points = transform(pose, c.world_points)
    inside = in_elevation_band(band, points) & (points[:, 1] > 0)
    return int(np.count_nonzero(inside))


@dataclasses.dataclass(slots=True, frozen=True)
class _PoseCandidate:
    pose: Pose
    tz: tz_solver.TzResult
    visible: int
    prior: bool
    cost: float


def _recover_rotations(
    dual: DualSolution, path: str, diagnostics: Diagnostics
) -> list[FloatArray]:
    if path == "general":
        return [ptl.recover_rotation_rank1(dual.kernel_basis[0])]

    kernel = coplanar.KernelPair(*dual.kernel_pair)
    system = coplanar.build_alpha_system(kernel)
    candidates = coplanar.solve_alpha(system)
    diagnostics.alpha_candidates = len(candidates)
    return coplanar.distinct_rotations(kernel, candidates)


def _solve_translation(
    rotation: FloatArray,
    req: SolveRequest,
    cost: ptl.PtLCost,
    band: tuple[float, float],
    timings: dict[str, float],
) -> tuple[Pose, tz_solver.TzResult]:
    c = req.correspondences
    with stage("translation_xy", timings):
        t_xy = ptl.recover_translation_xy(rotation, cost, c)

    def tie_score(candidate: float) -> float:
        pose = Pose(rotation, np.array([t_xy[0], t_xy[1], candidate]))
        return visible_count(pose, c, band)

    with stage("tz", timings):
        if req.tz_method is TzMethod.OPTIMIZE:
            result = tz_solver.optimize_tz(rotation, t_xy, c)
        else:
            quartic = tz_solver.build_quartic(rotation, t_xy, c)
            result = tz_solver.minimize_quartic(quartic, tie_score=tie_score)
    return Pose(rotation, np.array([t_xy[0], t_xy[1], result.tz])), result


def _select_pose(
    candidates: list[_PoseCandidate],
    use_prior: bool,
    diagnostics: Diagnostics,
) -> _PoseCandidate:
    """
    Pick among poses that explain the data equally well.

    More visible points win, then the plane orientation prior, then the
    lower reprojection cost. A remaining tie keeps the first candidate
    and records the runner-up.
    """

    def rank(candidate: _PoseCandidate) -> tuple[int, int]:
        return -candidate.visible, int(use_prior and not candidate.prior)

    ordered = sorted(candidates, key=lambda c: (*rank(c), c.cost))
    if len(ordered) < 2:
        return ordered[0]

    best, runner_up = ordered[0], ordered[1]
    tie_tol = config.Coplanar.tie_tol
    if rank(best) == rank(runner_up) and runner_up.cost <= best.cost + (
        tie_tol * (1 + best.cost)
    ):
        diagnostics.mirror_tie = True
        diagnostics.alternate_pose = runner_up.pose
        diagnostics.flag("mirror_tie")
        logger.warning(
            "Mirror poses are indistinguishable; returning the first."
        )
    return best


def pipeline_solve(req: SolveRequest) -> Solution:
    """Run every stage on a request and return the pose with diagnostics."""
    c = req.correspondences
    fov = req.fov or FovSpec.from_config()
    diagnostics = Diagnostics(variant=req.variant)
    timings = diagnostics.timings
    start = time.perf_counter()

    with stage("ptl_cost", timings):
        cost = ptl.build_ptl_cost(c)
    with stage("marginalize", timings):
        problem = ptl.marginalize_translation(cost, c)
    with stage("dual_sdp", timings):
        dual = solve_dual_sdp(problem)
    diagnostics.kernel_dim = dual.kernel_dim
    diagnostics.solver_status = dual.status
    diagnostics.solver_backend = dual.backend
    if dual.empty_kernel:
        diagnostics.flag("empty_kernel")

    if req.coplanar_policy is CoplanarPolicy.AUTO:
        path = "coplanar" if dual.kernel_dim == 2 else "general"
    elif req.coplanar_policy is CoplanarPolicy.FORCE_COPLANAR:
        path = "coplanar"
    else:
        path = "general"
        if dual.kernel_dim == 2:
            diagnostics.flag("forced_general")
            logger.warning(
                "Certificate kernel is two-dimensional but the general "
                "recovery was forced."
            )
    diagnostics.path = path

    with stage("rotation", timings):
        rotations = _recover_rotations(dual, path, diagnostics)

    use_prior = path == "coplanar" and config.Coplanar.plane_orientation_prior
    normal = c.plane_normal() if path == "coplanar" else None
    candidates = []
    for rotation in rotations:
        pose, tz_result = _solve_translation(
            rotation, req, cost, fov.elevation_band, timings
        )
        candidates.append(
            _PoseCandidate(
                pose=pose,
                tz=tz_result,
                visible=visible_count(pose, c, fov.elevation_band),
                prior=(
                    normal is not None
                    and coplanar.plane_orientation_prior(rotation, normal)
                ),
                cost=reprojection_cost(pose, c),
            )
        )
    chosen = _select_pose(candidates, use_prior, diagnostics)
    pose, diagnostics.tz = chosen.pose, chosen.tz
    if chosen.tz.tie:
        diagnostics.flag("tz_tie")

    primal = ptl.ptl_residual(
        cost, c, pose.rotation, np.append(pose.translation[:2], 0.0)
    )
    dual = dual.with_gap(primal)
    diagnostics.dual_value = dual.dual_value
    diagnostics.duality_gap = dual.duality_gap
    diagnostics.relative_gap = dual.relative_gap()
    gap_tol = config.Solver.gap_tol
    # A dual above the primal means the dual solve itself is off.
    consistent = dual.duality_gap >= -gap_tol * (1 + abs(primal))
    diagnostics.certified = (
        consistent
        and not dual.empty_kernel
        and diagnostics.relative_gap <= gap_tol
    )
    if not consistent:
        diagnostics.flag("negative_gap")
        logger.warning(
            f"Dual value {dual.dual_value:.6g} lies above the primal "
            f"{primal:.6g}; the pose is not certified."
        )
    elif diagnostics.relative_gap > gap_tol:
        diagnostics.flag("gap_exceeded")
        logger.warning(
            f"Relative duality gap {diagnostics.relative_gap:.3g} exceeds "
            f"{gap_tol:g}; the pose is not certified."
        )

    if req.refine:
        diagnostics.pre_refinement_pose = pose
        refinement = req.refinement or RefinementConfig.from_config(fov)
        try:
            with stage("refinement", timings):
                pose, diagnostics.refinement = cio_refine(pose, c, refinement)
        except SonarPnPError as e:
            logger.warning(f"Refinement failed: {e}")
            diagnostics.flag("refinement_failed")
        else:
            if diagnostics.refinement.status is RefinementStatus.NOT_IMPROVED:
                diagnostics.flag("refinement_not_improved")

    timings["total"] = (time.perf_counter() - start) * 1000
    logger.debug(
        f"Solved {c.count} correspondences via the {path} path in "
        f"{timings['total']:.1f} ms."
    )
    return Solution(pose, diagnostics)
