import numpy as np
import pytest
from numpy.testing import assert_allclose

from sonarpnp.errors import DegenerateInput, RecoveryFailure
from sonarpnp.models import CorrespondenceSet
from sonarpnp.rotations import angle_between, random_rotation
from sonarpnp.solvers import ptl


@pytest.fixture(scope="module")
def constraints() -> tuple[np.ndarray, np.ndarray]:
    return ptl.build_constraint_matrices()


def test_constraint_layout(constraints) -> None:
    matrices, values = constraints
    assert matrices.shape == (22, 10, 10)
    assert_allclose(matrices, matrices.transpose(0, 2, 1))
    assert values[-1] == 1.0
    assert not np.any(values[:-1])


def test_rotations_satisfy_every_constraint(constraints) -> None:
    matrices, values = constraints
    rng = np.random.default_rng(7)
    for _ in range(1000):
        r_tilde = ptl.homogenize(random_rotation(rng))
        residuals = (
            np.einsum("i,jik,k->j", r_tilde, matrices, r_tilde) - values
        )
        assert np.max(np.abs(residuals)) <= 1e-12


def test_reflections_break_a_cross_product(constraints) -> None:
    matrices, values = constraints
    rng = np.random.default_rng(8)
    for _ in range(1000):
        reflection = random_rotation(rng) @ np.diag([1.0, 1.0, -1.0])
        r_tilde = ptl.homogenize(reflection)
        residuals = (
            np.einsum("i,jik,k->j", r_tilde, matrices, r_tilde) - values
        )
        assert np.max(np.abs(residuals[12:21])) > 1e-3
        # Orthogonality alone can't tell them apart.
        assert np.max(np.abs(residuals[:12])) <= 1e-12


def test_ground_truth_has_zero_orthographic_cost(orthographic_scene) -> None:
    c = orthographic_scene.correspondences
    cost = ptl.build_ptl_cost(c)
    pose = orthographic_scene.pose
    assert ptl.ptl_residual(
        cost, c, pose.rotation, pose.translation
    ) == pytest.approx(0.0, abs=1e-18)

    problem = ptl.marginalize_translation(cost, c)
    r_tilde = ptl.homogenize(pose.rotation)
    assert problem.objective(r_tilde) == pytest.approx(0.0, abs=1e-9)
    assert_allclose(problem.residuals(r_tilde), 0.0, atol=1e-12)


def test_cost_matrix_is_psd(general_scene) -> None:
    c = general_scene.correspondences
    problem = ptl.marginalize_translation(ptl.build_ptl_cost(c), c)
    assert_allclose(problem.cost, problem.cost.T)
    assert np.linalg.eigvalsh(problem.cost)[0] >= -1e-10


def test_translation_is_recovered(orthographic_scene) -> None:
    c = orthographic_scene.correspondences
    pose = orthographic_scene.pose
    t_xy = ptl.recover_translation_xy(
        pose.rotation, ptl.build_ptl_cost(c), c
    )
    assert_allclose(t_xy, pose.translation[:2], atol=1e-12)


def test_marginal_cost_is_the_best_over_translations(general_scene) -> None:
    c = general_scene.correspondences
    cost = ptl.build_ptl_cost(c)
    problem = ptl.marginalize_translation(cost, c)
    rng = np.random.default_rng(21)
    # min over t_xy of sum |(R p_i)_xy + t_xy - m_i|^2, solved directly.
    design = np.tile(np.eye(2), (c.count, 1))
    for _ in range(50):
        rotation = random_rotation(rng)
        target = c.measurements - (c.world_points @ rotation.T)[:, :2]
        t_xy = np.linalg.lstsq(design, target.reshape(-1), rcond=None)[0]
        best = ptl.ptl_residual(cost, c, rotation, np.append(t_xy, 0.0))
        marginal = problem.objective(ptl.homogenize(rotation))
        assert marginal == pytest.approx(best, rel=1e-9, abs=1e-9)
        assert_allclose(
            ptl.recover_translation_xy(rotation, cost, c), t_xy, atol=1e-9
        )


def test_single_point_translation_lands_on_its_line(
    rng: np.random.Generator,
) -> None:
    c = CorrespondenceSet(rng.normal(size=(1, 3)), rng.normal(size=(1, 2)))
    rotation = random_rotation(rng)
    t_xy = ptl.recover_translation_xy(rotation, ptl.build_ptl_cost(c), c)
    landed = rotation @ c.world_points[0] + np.append(t_xy, 0.0)
    assert_allclose(landed[:2], c.measurements[0], atol=1e-12)


def test_marginalizing_needs_three_points() -> None:
    c = CorrespondenceSet(np.eye(3)[:2], np.ones((2, 2)))
    with pytest.raises(DegenerateInput):
        ptl.marginalize_translation(ptl.build_ptl_cost(c), c)


def test_rank1_recovery_removes_scale(rng: np.random.Generator) -> None:
    rotation = random_rotation(rng)
    recovered = ptl.recover_rotation_rank1(-3.0 * ptl.homogenize(rotation))
    assert_allclose(recovered, rotation, atol=1e-12)


def test_rank1_recovery_is_stable_under_noise(
    rng: np.random.Generator,
) -> None:
    for _ in range(20):
        rotation = random_rotation(rng)
        r_tilde = ptl.homogenize(rotation)
        noisy = r_tilde / np.linalg.norm(r_tilde) + 1e-6 * rng.normal(size=10)
        recovered = ptl.recover_rotation_rank1(noisy)
        assert angle_between(recovered, rotation) < 2e-5


def test_rank1_recovery_needs_h() -> None:
    with pytest.raises(RecoveryFailure):
        ptl.recover_rotation_rank1(ptl.homogenize(np.eye(3), h=0.0))


def test_lower_bound(orthographic_scene) -> None:
    c = orthographic_scene.correspondences
    problem = ptl.marginalize_translation(ptl.build_ptl_cost(c), c)
    rotations = [random_rotation(np.random.default_rng(i)) for i in range(5)]
    assert ptl.lower_bound_holds(problem, rotations, 0.0)
    assert not ptl.lower_bound_holds(problem, rotations, 1e6)
