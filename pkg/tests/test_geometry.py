import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sonarpnp.errors import DegenerateInput
from sonarpnp.geometry import (
    cartesian_to_spherical,
    elevation,
    in_elevation_band,
    in_fov,
    project,
    project_arc,
    project_orthographic,
    spherical_to_cartesian,
    transform,
)
from sonarpnp.models import (
    Pose,
    ProjectionKind,
    ProjectionModel,
    SphericalCoord,
)
from sonarpnp.rotations import exp_so3, random_rotation


def test_bearing_is_measured_from_the_y_axis() -> None:
    s = cartesian_to_spherical([1.0, 1.0, 0.0])
    assert s.theta == pytest.approx(math.pi / 4)
    assert s.phi == pytest.approx(0.0)
    assert s.r == pytest.approx(math.sqrt(2))


def test_spherical_coordinates_convert_back(rng: np.random.Generator) -> None:
    r = rng.uniform(0.5, 6, 50)
    theta = rng.uniform(-0.5, 0.5, 50)
    phi = rng.uniform(-0.17, 0.17, 50)
    points = spherical_to_cartesian(SphericalCoord(r, theta, phi))
    back = cartesian_to_spherical(points)
    assert_allclose(back.r, r, rtol=1e-12)
    assert_allclose(back.theta, theta, atol=1e-12)
    assert_allclose(back.phi, phi, atol=1e-12)


def test_arc_projection_keeps_the_range(rng: np.random.Generator) -> None:
    points = rng.uniform([-3, 0.5, -1], [3, 6, 1], (200, 3))
    measured = project_arc(points)
    assert_allclose(
        np.linalg.norm(measured, axis=1),
        np.linalg.norm(points, axis=1),
        rtol=1e-12,
    )


def test_arc_projection_keeps_the_bearing() -> None:
    measured = project_arc([0.0, 3.0, 4.0])
    assert_allclose(measured, [0.0, 5.0], atol=1e-12)


def test_orthographic_projection_drops_z() -> None:
    assert_allclose(project_orthographic([1.0, 2.0, 3.0]), [1.0, 2.0])
    assert_allclose(project_orthographic([1.0, 2.0, 3.0], 0.5), [2.0, 4.0])


def test_project_dispatches_on_the_model() -> None:
    point = np.array([0.0, 3.0, 4.0])
    orthographic = ProjectionModel(ProjectionKind.ORTHOGRAPHIC)
    assert_allclose(project(orthographic, point), [0.0, 3.0])
    assert_allclose(project(ProjectionModel(), point), [0.0, 5.0])


def test_origin_has_no_bearing() -> None:
    with pytest.raises(DegenerateInput):
        project_arc(np.zeros(3))


def test_transform_applies_rotation_then_translation() -> None:
    pose = Pose(exp_so3(np.array([0.0, 0.0, math.pi / 2])), [1.0, 0, 0])
    assert_allclose(transform(pose, [1.0, 0.0, 0.0]), [1.0, 1.0, 0.0])


def test_transform_composes_like_poses(rng: np.random.Generator) -> None:
    first = Pose(random_rotation(rng), rng.normal(size=3))
    second = Pose(random_rotation(rng), rng.normal(size=3))
    points = rng.normal(size=(5, 3))
    assert_allclose(
        transform(second, transform(first, points)),
        transform(second.compose(first), points),
        atol=1e-12,
    )
    assert_allclose(
        transform(first.inverse(), transform(first, points)),
        points,
        atol=1e-12,
    )

def test_fov_membership(fov) -> None:
    inside = [0.0, 3.0, 0.0]
    too_far = [0.0, 7.0, 0.0]
    too_high = [0.0, 3.0, 1.0]
    behind = [0.0, -3.0, 0.0]
    assert in_fov(fov, inside) is True
    assert in_fov(fov, too_far) is False
    assert_allclose(
        in_fov(fov, np.array([inside, too_far, too_high, behind])),
        [True, False, False, False],
    )


def test_elevation_band() -> None:
    points = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    assert_allclose(elevation(points), [0.0, math.pi / 4])
    band = (-0.2, 0.2)
    assert in_elevation_band(band, points).tolist() == [True, False]
