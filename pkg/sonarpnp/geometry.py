"""
The imaging model of a 2D forward-looking sonar.

Bearing is measured from +y toward +x, theta = atan2(x, y); elevation is
phi = asin(z / r). Every function accepts a single point of shape (3,)
or a batch of shape (N, 3) and answers in kind.
"""
import numpy as np

from sonarpnp.errors import DegenerateInput
from sonarpnp.models import (
    FovSpec,
    Pose,
    ProjectionKind,
    ProjectionModel,
    SphericalCoord,
)
from sonarpnp.type_aliases import ArrayLike, FloatArray


def _as_points(p: ArrayLike) -> FloatArray:
    points = np.asarray(p, dtype=np.float64)
    if points.shape[-1] != 3:
        raise DegenerateInput(
            f"Expected points with 3 coordinates, got shape {points.shape}."
        )
    return points


def _ranges(points: FloatArray) -> FloatArray:
    ranges = np.linalg.norm(points, axis=-1)
    if np.any(ranges == 0):
        raise DegenerateInput("A point coincides with the sonar origin.")
    return ranges


def spherical_to_cartesian(s: SphericalCoord) -> FloatArray:
    """Return [r cos(phi) sin(theta), r cos(phi) cos(theta), r sin(phi)]."""
    r = np.asarray(s.r, dtype=np.float64)
    cos_phi = np.cos(s.phi)
    return np.stack(
        (
            r * cos_phi * np.sin(s.theta),
            r * cos_phi * np.cos(s.theta),
            r * np.sin(s.phi),
        ),
        axis=-1,
    )


def cartesian_to_spherical(p: ArrayLike) -> SphericalCoord:
    """Return the (r, theta, phi) of sonar-frame points."""
    points = _as_points(p)
    r = _ranges(points)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    # Rounding may push z / r a hair outside [-1, 1].
    phi = np.arcsin(np.clip(z / r, -1.0, 1.0))
    theta = np.arctan2(x, y)
    if r.ndim == 0:
        return SphericalCoord(float(r), float(theta), float(phi))
    return SphericalCoord(r, theta, phi)


def project_arc(p: ArrayLike) -> FloatArray:
    """
    Project with the exact sonar model: m = [r sin(theta), r cos(theta)].

    The elevation is folded into the range, so |m| = |p|.
    """
    spherical = cartesian_to_spherical(p)
    r = np.asarray(spherical.r)
    return np.stack(
        (r * np.sin(spherical.theta), r * np.cos(spherical.theta)), axis=-1
    )


def project_orthographic(p: ArrayLike, alpha: float = 1.0) -> FloatArray:
    """Project in parallel along z, scaled by 1 / alpha: m = [x, y] / alpha."""
    points = _as_points(p)
    return points[..., :2] / alpha


def project(model: ProjectionModel, p: ArrayLike) -> FloatArray:
    """Project sonar-frame points with the given model."""
    if model.kind is ProjectionKind.ARC:
        return project_arc(p)
    return project_orthographic(p, model.alpha)


def transform(pose: Pose, p_world: ArrayLike) -> FloatArray:
    """Map world points into the sonar frame: R p + t."""
    points = _as_points(p_world)
    return points @ pose.rotation.T + pose.translation


def elevation(p_sonar: ArrayLike) -> FloatArray:
    """Return phi = asin(z / r) of sonar-frame points."""
    return np.asarray(cartesian_to_spherical(p_sonar).phi)


def in_fov(fov: FovSpec, p_sonar: ArrayLike) -> FloatArray:
    """Return whether sonar-frame points lie inside the field of view."""
    spherical = cartesian_to_spherical(p_sonar)
    r = np.asarray(spherical.r)
    theta = np.asarray(spherical.theta)
    phi = np.asarray(spherical.phi)
    inside = (
        (fov.r_min <= r)
        & (r <= fov.r_max)
        & (fov.theta_min <= theta)
        & (theta <= fov.theta_max)
        & (fov.phi_min <= phi)
        & (phi <= fov.phi_max)
    )
    if inside.ndim == 0:
        return bool(inside)
    return inside


def in_elevation_band(
    band: tuple[float, float], p_sonar: ArrayLike
) -> FloatArray:
    """Return whether sonar-frame points respect phi_min <= phi <= phi_max."""
    phi = elevation(p_sonar)
    return (band[0] <= phi) & (phi <= band[1])
