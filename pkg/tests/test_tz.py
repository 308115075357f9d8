import numpy as np
import pytest

from sonarpnp.errors import NumericalFailure
from sonarpnp.models import CorrespondenceSet
from sonarpnp.rotations import exp_so3
from sonarpnp.solvers import tz


def test_quartic_must_be_normalized() -> None:
    with pytest.raises(NumericalFailure):
        tz.QuarticObjective(np.array([2.0, 0, 0, 0, 0]))
    with pytest.raises(NumericalFailure):
        tz.QuarticObjective(np.array([1.0, np.nan, 0, 0, 0]))
    with pytest.raises(NumericalFailure):
        tz.QuarticObjective(np.array([1.0, 0, 0]))


def test_quartic_derivatives() -> None:
    q = tz.QuarticObjective(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    assert q(1.0) == pytest.approx(15.0)
    np.testing.assert_allclose(q.derivative(), [4.0, 6.0, 6.0, 4.0])
    np.testing.assert_allclose(q.derivative(2), [12.0, 12.0, 6.0])


def test_single_minimum() -> None:
    # (t - 1.5)^2 (t^2 + 1)
    q = tz.QuarticObjective(np.polymul([1.0, -3.0, 2.25], [1.0, 0.0, 1.0]))
    result = tz.minimize_quartic(q)
    assert result.tz == pytest.approx(1.5, abs=1e-8)
    assert result.value == pytest.approx(0.0, abs=1e-12)
    assert not result.tie
    assert result.method == "closed"


def test_symmetric_minima_are_a_tie() -> None:
    q = tz.QuarticObjective(np.array([1.0, 0.0, -2.0, 0.0, 1.0]))
    result = tz.minimize_quartic(q)
    assert result.tie
    assert result.tz == pytest.approx(-1.0)
    assert result.alternatives == pytest.approx((1.0,))
    assert len(result.stationary_points) == 3


def test_tie_score_breaks_the_tie() -> None:
    q = tz.QuarticObjective(np.array([1.0, 0.0, -2.0, 0.0, 1.0]))
    result = tz.minimize_quartic(q, tie_score=lambda candidate: candidate)
    assert result.tz == pytest.approx(1.0)


def test_uneven_minima_pick_the_lower_one() -> None:
    q = tz.QuarticObjective(np.array([1.0, 0.0, -2.0, 0.3, 1.0]))
    result = tz.minimize_quartic(q)
    assert not result.tie
    assert result.tz < 0
    assert result.value == pytest.approx(min(result.stationary_values))


def test_exact_ranges_give_the_true_tz(general_scene) -> None:
    pose = general_scene.pose
    c = general_scene.correspondences
    q = tz.build_quartic(pose.rotation, pose.translation[:2], c)
    assert q(pose.translation[2]) == pytest.approx(0.0, abs=1e-9)
    result = tz.minimize_quartic(q)
    assert result.tz == pytest.approx(pose.translation[2], abs=1e-6)


def test_range_terms(general_scene) -> None:
    pose = general_scene.pose
    c = general_scene.correspondences
    a, b = tz.range_equation_terms(pose.rotation, pose.translation[:2], c)
    t_z = pose.translation[2]
    np.testing.assert_allclose(t_z**2 + 2 * b * t_z + a, 0.0, atol=1e-10)


def test_optimize_tz_finds_the_true_tz(general_scene) -> None:
    pose = general_scene.pose
    result = tz.optimize_tz(
        pose.rotation, pose.translation[:2], general_scene.correspondences
    )
    assert result.method == "opt"
    assert result.tz == pytest.approx(pose.translation[2], abs=1e-5)


@pytest.mark.parametrize("shift", [-0.8, 0.35, 1.5])
def test_shifting_the_scene_along_z_shifts_tz(general_scene, shift) -> None:
    c = general_scene.correspondences
    rotation = exp_so3(np.array([0.02, -0.01, 0.03])) @ (
        general_scene.pose.rotation
    )
    t_xy = general_scene.pose.translation[:2]
    # R p' = R p - shift * e_z
    shifted = CorrespondenceSet(
        c.world_points - shift * rotation[2], c.measurements
    )
    before = tz.minimize_quartic(tz.build_quartic(rotation, t_xy, c))
    after = tz.minimize_quartic(tz.build_quartic(rotation, t_xy, shifted))
    assert after.tz == pytest.approx(before.tz + shift, abs=1e-6)
    assert after.value == pytest.approx(before.value, rel=1e-6, abs=1e-12)
