"""
Synthetic scenes in the sonar's field of view.

The ground-truth pose maps world to sonar coordinates. Its translation
is one more point drawn from the field of view, in sonar coordinates,
so the scene always sits in front of the sensor.
"""
import dataclasses
import enum
import math
import typing as t

import numpy as np

from sonarpnp import config
from sonarpnp.errors import GenerationFailure, InvalidConfiguration
from sonarpnp.geometry import in_fov, project, spherical_to_cartesian
from sonarpnp.models import (
    CorrespondenceSet,
    FovSpec,
    Pose,
    ProjectionKind,
    ProjectionModel,
    SphericalCoord,
)
from sonarpnp.rotations import random_rotation
from sonarpnp.type_aliases import FloatArray

#: Ranges below this are resampled; the origin has no bearing.
MIN_RANGE = 1e-6


class SceneMode(enum.Enum):
    GENERAL = "general"
    COPLANAR = "coplanar"

    @property
    def min_points(self) -> int:
        return 5 if self is SceneMode.COPLANAR else 7


@dataclasses.dataclass(slots=True, frozen=True)
class ScenarioConfig:
    """What to simulate in one trial."""

    mode: SceneMode
    point_count: int
    fov: FovSpec
    noise_sigma: float = 0.0
    trials: int = 1
    seed: int = 0
    projection: ProjectionModel = ProjectionModel()
    disc_radius: float = 2.5
    plane_anchor: tuple[float, float, float] = (0.0, 3.0, 0.0)
    dihedral_range: tuple[float, float] = (
        math.radians(5.0),
        math.radians(70.0),
    )
    retry_factor: int = 100

    def __post_init__(self) -> None:
        if self.point_count < self.mode.min_points:
            raise InvalidConfiguration(
                f"{self.mode.value} scenes need at least "
                f"{self.mode.min_points} points, got {self.point_count}."
            )
        if not self.noise_sigma >= 0:
            raise InvalidConfiguration(
                f"noise_sigma must be non-negative, got {self.noise_sigma}."
            )
        if self.trials < 1:
            raise InvalidConfiguration("trials must be at least 1.")
        config.positive("disc_radius", self.disc_radius)
        low, high = self.dihedral_range
        if not 0 <= low < high < math.pi / 2:
            raise InvalidConfiguration(
                f"Dihedral range must lie in [0, 90) degrees, "
                f"got [{math.degrees(low)}, {math.degrees(high)}]."
            )

    @classmethod
    def from_config(
        cls,
        mode: t.Union[SceneMode, str],
        point_count: int,
        noise_sigma: float = 0.0,
        **overrides: t.Any,
    ) -> "ScenarioConfig":
        """Fill everything not given from the harness config section."""
        values: dict[str, t.Any] = dict(
            fov=FovSpec.from_config(),
            seed=config.Harness.seed,
            trials=config.Harness.trials,
            projection=ProjectionModel(
                ProjectionKind(config.Harness.projection)
            ),
            disc_radius=config.Harness.disc_radius,
            plane_anchor=tuple(config.Harness.plane_anchor),
            dihedral_range=(
                math.radians(config.Harness.dihedral_min_deg),
                math.radians(config.Harness.dihedral_max_deg),
            ),
            retry_factor=config.Harness.retry_factor,
        )
        values.update(overrides)
        return cls(
            SceneMode(mode), point_count, noise_sigma=noise_sigma, **values
        )


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class PlaneSpec:
    """
    A plane in sonar coordinates through a fixed anchor.

    normal = [sin(d) cos(psi), sin(d) sin(psi), cos(d)] with the dihedral
    d against the imaging plane and psi in (-90, 0) degrees, which gives
    n_y n_z < 0 and n_x n_z > 0.
    """

    anchor: FloatArray
    normal: FloatArray
    dihedral: float

    def __post_init__(self) -> None:
        if abs(np.linalg.norm(self.normal) - 1) > 1e-12:
            raise InvalidConfiguration("Plane normal must be a unit vector.")
        n = self.normal
        if not (n[1] * n[2] < 0 and n[0] * n[2] > 0):
            raise InvalidConfiguration(
                f"Plane normal {n} does not face the sonar."
            )

    @classmethod
    def sample(
        cls,
        rng: np.random.Generator,
        anchor: t.Sequence[float],
        dihedral_range: tuple[float, float],
    ) -> "PlaneSpec":
        dihedral = rng.uniform(*dihedral_range)
        # Open interval: psi = -90 or 0 zeroes one of the products.
        azimuth = -math.pi / 2 * rng.uniform(1e-9, 1 - 1e-9)
        normal = np.array(
            [
                math.sin(dihedral) * math.cos(azimuth),
                math.sin(dihedral) * math.sin(azimuth),
                math.cos(dihedral),
            ]
        )
        return cls(np.asarray(anchor, dtype=np.float64), normal, dihedral)

    def basis(self) -> tuple[FloatArray, FloatArray]:
        """Return two orthonormal directions spanning the plane."""
        helper = np.array([1.0, 0.0, 0.0])
        if abs(self.normal @ helper) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        u = np.cross(self.normal, helper)
        u /= np.linalg.norm(u)
        return u, np.cross(self.normal, u)


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class Scene:
    """A noise-free simulated instance and its ground truth."""

    pose: Pose
    correspondences: CorrespondenceSet
    sonar_points: FloatArray
    plane: t.Optional[PlaneSpec] = None


def sample_fov_points(
    fov: FovSpec, count: int, rng: np.random.Generator
) -> FloatArray:
    """Draw (r, theta, phi) uniformly in the FoV box; return Cartesian."""
    r = rng.uniform(max(fov.r_min, 0.0), fov.r_max, count)
    while np.any(small := r < MIN_RANGE):
        r[small] = rng.uniform(fov.r_min, fov.r_max, np.count_nonzero(small))
    theta = rng.uniform(fov.theta_min, fov.theta_max, count)
    phi = rng.uniform(fov.phi_min, fov.phi_max, count)
    return spherical_to_cartesian(SphericalCoord(r, theta, phi))


def sample_plane_points(
    plane: PlaneSpec,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> FloatArray:
    """
    Draw points uniformly on a disc of the plane, keeping those in view.

    Raises GenerationFailure once retry_factor * point_count draws
    have been spent.
    """
    u, v = plane.basis()
    budget = cfg.retry_factor * cfg.point_count
    accepted: list[FloatArray] = []
    draws = 0
    while len(accepted) < cfg.point_count:
        if draws >= budget:
            raise GenerationFailure(
                f"Only {len(accepted)} of {cfg.point_count} plane points "
                f"fell in the FoV after {budget} draws."
            )
        batch = min(budget - draws, 4 * cfg.point_count)
        draws += batch
        radius = cfg.disc_radius * np.sqrt(rng.uniform(0, 1, batch))
        angle = rng.uniform(0, 2 * math.pi, batch)
        points = (
            plane.anchor
            + (radius * np.cos(angle))[:, None] * u
            + (radius * np.sin(angle))[:, None] * v
        )
        norms = np.linalg.norm(points, axis=1)
        points = points[norms > MIN_RANGE]
        accepted.extend(points[in_fov(cfg.fov, points)])
    return np.array(accepted[: cfg.point_count])


def generate_scene(cfg: ScenarioConfig, rng: np.random.Generator) -> Scene:
    """Sample a ground-truth pose and noise-free correspondences."""
    plane = None
    if cfg.mode is SceneMode.COPLANAR:
        plane = PlaneSpec.sample(rng, cfg.plane_anchor, cfg.dihedral_range)
        sonar_points = sample_plane_points(plane, cfg, rng)
    else:
        sonar_points = sample_fov_points(cfg.fov, cfg.point_count, rng)

    translation = sample_fov_points(cfg.fov, 1, rng)[0]
    rotation = random_rotation(rng)
    pose = Pose(rotation, translation)

    world_points = (sonar_points - translation) @ rotation
    measurements = project(cfg.projection, sonar_points)
    return Scene(
        pose,
        CorrespondenceSet(world_points, measurements),
        sonar_points,
        plane,
    )
