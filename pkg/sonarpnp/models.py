"""
Value types shared by the solvers, the harness and the CLI.

- All angles are radians; degrees only appear at the config and report
  boundaries.
- Arrays held by the models are copied and frozen on construction, so
  instances can be shared freely between threads.
"""
import dataclasses
import enum
import math
import typing as t

import numpy as np

from sonarpnp import config
from sonarpnp.errors import (
    DegenerateInput,
    InsufficientCorrespondences,
    InvalidConfiguration,
    InvalidPose,
)
from sonarpnp.type_aliases import ArrayLike, FloatArray

#: Tolerance of the SO(3) membership checks.
SO3_TOL = 1e-9

model_dataclass = dataclasses.dataclass(slots=True, frozen=True)


def frozen_array(value: ArrayLike, shape: tuple[int, ...]) -> FloatArray:
    """Copy value into a read-only float array of the given shape."""
    array = np.array(value, dtype=np.float64)
    if array.shape != shape:
        raise ValueError(f"Expected shape {shape}, got {array.shape}.")
    array.setflags(write=False)
    return array


def require_finite(name: str, array: FloatArray) -> None:
    """Raise DegenerateInput if the array holds NaN or infinity."""
    if not np.all(np.isfinite(array)):
        raise DegenerateInput(f"{name} contains non-finite values.")


@model_dataclass
class SphericalCoord:
    """
    A sonar-frame point as (range, bearing, elevation).

    The fields may be scalars or equally shaped arrays.
    """

    r: t.Union[float, FloatArray]
    theta: t.Union[float, FloatArray]
    phi: t.Union[float, FloatArray]

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.r) < 0):
            raise DegenerateInput("Range must be non-negative.")
        for name in ("r", "theta", "phi"):
            require_finite(name, np.asarray(getattr(self, name)))


class ProjectionKind(enum.Enum):
    """How a sonar-frame point lands on the imaging plane."""

    ARC = "arc"
    ORTHOGRAPHIC = "orthographic"


@model_dataclass
class ProjectionModel:
    """
    A projection model of the sonar.

    ARC is the exact sensor model. ORTHOGRAPHIC replaces 1 / cos(phi) by
    1 / alpha; alpha = 1 is the plain orthographic model the solver uses.
    """

    kind: ProjectionKind = ProjectionKind.ARC
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise InvalidConfiguration(
                f"alpha must lie in (0, 1], got {self.alpha}."
            )


@model_dataclass
class FovSpec:
    """A box in (range, bearing, elevation) the sonar can observe."""

    r_min: float
    r_max: float
    theta_min: float
    theta_max: float
    phi_min: float
    phi_max: float

    def __post_init__(self) -> None:
        pairs = (
            ("r", self.r_min, self.r_max),
            ("theta", self.theta_min, self.theta_max),
            ("phi", self.phi_min, self.phi_max),
        )
        for name, low, high in pairs:
            if not low < high:
                raise InvalidConfiguration(
                    f"{name}_min must be below {name}_max, "
                    f"got [{low}, {high}]."
                )
        if self.r_min < 0:
            raise InvalidConfiguration("r_min must be non-negative.")

    @classmethod
    def from_degrees(
        cls,
        r_min: float,
        r_max: float,
        theta_min_deg: float,
        theta_max_deg: float,
        phi_min_deg: float,
        phi_max_deg: float,
    ) -> "FovSpec":
        """Build a FoV whose angular limits are given in degrees."""
        return cls(
            r_min=r_min,
            r_max=r_max,
            theta_min=math.radians(theta_min_deg),
            theta_max=math.radians(theta_max_deg),
            phi_min=math.radians(phi_min_deg),
            phi_max=math.radians(phi_max_deg),
        )

    @classmethod
    def from_config(cls) -> "FovSpec":
        """Build the FoV from the config's fov section."""
        return cls.from_degrees(
            config.Fov.r_min,
            config.Fov.r_max,
            config.Fov.theta_min_deg,
            config.Fov.theta_max_deg,
            config.Fov.phi_min_deg,
            config.Fov.phi_max_deg,
        )

    @property
    def elevation_band(self) -> tuple[float, float]:
        """Return (phi_min, phi_max)."""
        return self.phi_min, self.phi_max


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class Pose:
    """
    A rigid transform from the world frame to the sonar frame.

    p_sonar = rotation @ p_world + translation
    """

    rotation: FloatArray
    translation: FloatArray

    def __post_init__(self) -> None:
        rotation = frozen_array(self.rotation, (3, 3))
        translation = frozen_array(self.translation, (3,))
        require_finite("rotation", rotation)
        require_finite("translation", translation)

        orthogonality = np.linalg.norm(rotation.T @ rotation - np.eye(3))
        if orthogonality > SO3_TOL:
            raise InvalidPose(
                f"Rotation is not orthonormal (residual {orthogonality:.3g})."
            )
        determinant = np.linalg.det(rotation)
        if abs(determinant - 1) > SO3_TOL:
            raise InvalidPose(
                f"Rotation determinant is {determinant:.12g}, expected +1."
            )
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Pose":
        """Return the identity transform."""
        return cls(np.eye(3), np.zeros(3))

    @property
    def rows(self) -> FloatArray:
        """Return the rotation's rows r_1, r_2, r_3 stacked."""
        return self.rotation

    @property
    def matrix(self) -> FloatArray:
        """Return the homogeneous 4x4 matrix of this transform."""
        homogeneous = np.eye(4)
        homogeneous[:3, :3] = self.rotation
        homogeneous[:3, 3] = self.translation
        return homogeneous

    def compose(self, other: "Pose") -> "Pose":
        """Return self ∘ other, i.e. apply other first."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        """Return the transform from the sonar frame to the world frame."""
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def with_translation(self, translation: ArrayLike) -> "Pose":
        """Return a copy with the translation replaced."""
        return Pose(self.rotation, np.asarray(translation, dtype=np.float64))


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class CorrespondenceSet:
    """
    Paired world points and sonar measurements.

    world_points has shape (N, 3) and measurements (N, 2).
    """

    world_points: FloatArray
    measurements: FloatArray

    def __post_init__(self) -> None:
        world = np.array(self.world_points, dtype=np.float64, ndmin=2)
        measured = np.array(self.measurements, dtype=np.float64, ndmin=2)
        if world.ndim != 2 or world.shape[1] != 3:
            raise DegenerateInput(
                f"world_points must have shape (N, 3), got {world.shape}."
            )
        if measured.ndim != 2 or measured.shape[1] != 2:
            raise DegenerateInput(
                f"measurements must have shape (N, 2), got {measured.shape}."
            )
        if len(world) != len(measured):
            raise DegenerateInput(
                f"{len(world)} world points but {len(measured)} measurements."
            )
        require_finite("world_points", world)
        require_finite("measurements", measured)
        world.setflags(write=False)
        measured.setflags(write=False)
        object.__setattr__(self, "world_points", world)
        object.__setattr__(self, "measurements", measured)

    @property
    def count(self) -> int:
        """Return the number of correspondences N."""
        return len(self.world_points)

    def __len__(self) -> int:
        return self.count

    def planarity(self) -> float:
        """
        Return the world points' out-of-plane spread.

        It's the smallest singular value of the centered points divided
        by the largest; zero for exactly coplanar points.
        """
        centered = self.world_points - self.world_points.mean(axis=0)
        singular_values = np.linalg.svd(centered, compute_uv=False)
        if len(singular_values) < 3 or singular_values[0] == 0:
            return 0.0
        return float(singular_values[2] / singular_values[0])

    def plane_normal(self) -> FloatArray:
        """Return the unit normal of the best-fit plane of the points."""
        centered = self.world_points - self.world_points.mean(axis=0)
        _, _, vt = np.linalg.svd(centered)
        return vt[-1]

    def is_coplanar(self, tol: float = 1e-8) -> bool:
        """Return True if the world points lie on one plane."""
        return self.planarity() <= tol

    def check_size(self, coplanar: t.Optional[bool] = None) -> None:
        """
        Reject sets too small for the solver.

        Coplanar scenes need 5 correspondences, general ones 7.
        When coplanar is None, the world points decide.
        """
        if coplanar is None:
            coplanar = self.count >= 3 and self.is_coplanar(1e-6)
        required = 5 if coplanar else 7
        if self.count < required:
            raise InsufficientCorrespondences(self.count, required)

    def with_measurements(
        self, measurements: ArrayLike
    ) -> "CorrespondenceSet":
        """Return a copy holding different measurements."""
        return CorrespondenceSet(self.world_points, np.asarray(measurements))
