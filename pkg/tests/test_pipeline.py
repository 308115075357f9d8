import dataclasses

import numpy as np
import pytest

from sonarpnp import pipeline
from sonarpnp.errors import DegenerateInput, InsufficientCorrespondences
from sonarpnp.geometry import transform
from sonarpnp.harness.metrics import rotation_error_deg, translation_errors
from sonarpnp.models import CorrespondenceSet, Pose
from sonarpnp.pipeline import (
    CoplanarPolicy,
    SolveRequest,
    TzMethod,
    pipeline_solve,
    stage,
    variant_name,
)
from sonarpnp.rotations import exp_so3
from sonarpnp.solvers.refinement import RefinementStatus

from .conftest import make_scene

MIRROR = np.diag([1.0, 1.0, -1.0])


@pytest.mark.parametrize(
    ("refine", "tz_method", "expected"),
    [
        (False, TzMethod.CLOSED_FORM, "PtL"),
        (True, TzMethod.CLOSED_FORM, "PtL-CIO"),
        (False, TzMethod.OPTIMIZE, "PtL-Otz"),
        (True, TzMethod.OPTIMIZE, "PtL-Otz-CIO"),
    ],
)
def test_variant_names(refine, tz_method, expected) -> None:
    assert variant_name(refine, tz_method) == expected


def test_stage_labels_errors_and_times() -> None:
    timings: dict[str, float] = {}
    with pytest.raises(DegenerateInput) as info:
        with stage("rotation", timings):
            raise DegenerateInput("boom")
    assert info.value.stage == "rotation"
    assert str(info.value) == "[rotation] boom"
    assert timings["rotation"] >= 0


def test_stage_keeps_an_existing_label() -> None:
    with pytest.raises(DegenerateInput) as info:
        with stage("outer", {}):
            raise DegenerateInput("boom", stage="inner")
    assert info.value.stage == "inner"


def test_requests_check_the_point_count(rng: np.random.Generator) -> None:
    c = CorrespondenceSet(rng.normal(size=(6, 3)), rng.normal(size=(6, 2)))
    with pytest.raises(InsufficientCorrespondences):
        SolveRequest(c)


def test_orthographic_data_is_solved_exactly(orthographic_scene) -> None:
    solution = pipeline_solve(
        SolveRequest(orthographic_scene.correspondences)
    )
    diagnostics = solution.diagnostics
    assert diagnostics.path == "general"
    assert diagnostics.kernel_dim == 1
    assert diagnostics.certified
    truth = orthographic_scene.pose
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 1e-3
    np.testing.assert_allclose(
        solution.pose.translation[:2], truth.translation[:2], atol=1e-5
    )


def test_general_solve_reports_every_stage(general_scene) -> None:
    solution = pipeline_solve(SolveRequest(general_scene.correspondences))
    diagnostics = solution.diagnostics
    assert diagnostics.variant == "PtL"
    assert np.isfinite(diagnostics.relative_gap)
    assert diagnostics.tz is not None
    for name in ("ptl_cost", "dual_sdp", "rotation", "tz", "total"):
        assert name in diagnostics.timings
    assert "timings_ms" in diagnostics.as_dict()

    # The orthographic approximation costs at most a couple of degrees.
    truth = general_scene.pose
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 2.0


def test_refinement_removes_the_model_bias(general_scene) -> None:
    solution = pipeline_solve(
        SolveRequest(general_scene.correspondences, refine=True)
    )
    diagnostics = solution.diagnostics
    assert diagnostics.variant == "PtL-CIO"
    assert diagnostics.pre_refinement_pose is not None
    assert diagnostics.refinement is not None

    truth = general_scene.pose
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 0.1
    txy, tz = translation_errors(truth.translation, solution.pose.translation)
    assert np.hypot(txy, tz) < 1e-3


def test_optimized_tz_variant(general_scene) -> None:
    solution = pipeline_solve(
        SolveRequest(
            general_scene.correspondences, tz_method=TzMethod.OPTIMIZE
        )
    )
    assert solution.diagnostics.variant == "PtL-Otz"
    assert solution.diagnostics.tz.method == "opt"


def test_coplanar_scene_takes_the_coplanar_path(coplanar_scene) -> None:
    solution = pipeline_solve(SolveRequest(coplanar_scene.correspondences))
    diagnostics = solution.diagnostics
    assert diagnostics.kernel_dim == 2
    assert diagnostics.path == "coplanar"
    assert diagnostics.alpha_candidates >= 1
    # The plane prior rules out the mirror image.
    assert not diagnostics.mirror_tie
    truth = coplanar_scene.pose.rotation
    assert rotation_error_deg(truth, solution.pose.rotation) < 5.0


def test_plane_prior_picks_the_true_coplanar_pose(
    orthographic_coplanar_scene,
) -> None:
    c = orthographic_coplanar_scene.correspondences
    solution = pipeline_solve(SolveRequest(c))
    assert solution.diagnostics.path == "coplanar"
    assert not solution.diagnostics.mirror_tie

    truth = orthographic_coplanar_scene.pose
    normal = c.plane_normal()
    mirror = MIRROR @ truth.rotation @ (
        np.eye(3) - 2 * np.outer(normal, normal)
    )
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 1e-2
    assert rotation_error_deg(mirror, solution.pose.rotation) > 1.0
    np.testing.assert_allclose(
        solution.pose.translation[:2], truth.translation[:2], atol=1e-4
    )


def test_refined_coplanar_solve_reaches_the_truth(coplanar_scene) -> None:
    solution = pipeline_solve(
        SolveRequest(coplanar_scene.correspondences, refine=True)
    )
    truth = coplanar_scene.pose
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 0.1
    txy, tz = translation_errors(truth.translation, solution.pose.translation)
    assert np.hypot(txy, tz) < 1e-3


def test_forcing_the_coplanar_path(coplanar_scene) -> None:
    solution = pipeline_solve(
        SolveRequest(
            coplanar_scene.correspondences,
            coplanar_policy=CoplanarPolicy.FORCE_COPLANAR,
        )
    )
    assert solution.diagnostics.path == "coplanar"


def test_solution_is_a_proper_rotation(general_scene) -> None:
    rotation = pipeline_solve(
        SolveRequest(general_scene.correspondences)
    ).pose.rotation
    np.testing.assert_allclose(rotation @ rotation.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(rotation) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", [17, 29, 51])
def test_refined_noise_free_solves_reach_the_truth(seed) -> None:
    scene = make_scene(seed=seed)
    solution = pipeline_solve(SolveRequest(scene.correspondences, refine=True))
    assert solution.diagnostics.refinement.status is (
        RefinementStatus.CONVERGED
    )
    truth = scene.pose
    assert rotation_error_deg(truth.rotation, solution.pose.rotation) < 0.1
    txy, tz = translation_errors(truth.translation, solution.pose.translation)
    assert np.hypot(txy, tz) < 1e-3


def test_solutions_follow_a_change_of_world_frame(orthographic_scene) -> None:
    c = orthographic_scene.correspondences
    change = Pose(exp_so3(np.array([0.3, -0.2, 0.5])), [1.0, -2.0, 0.5])
    moved = CorrespondenceSet(
        transform(change, c.world_points), c.measurements
    )
    first = pipeline_solve(SolveRequest(c)).pose
    second = pipeline_solve(SolveRequest(moved)).pose

    expected = first.compose(change.inverse())
    assert rotation_error_deg(expected.rotation, second.rotation) < 2e-3
    np.testing.assert_allclose(
        second.translation[:2], expected.translation[:2], atol=1e-4
    )


def _patch_dual(monkeypatch, change) -> None:
    solve = pipeline.solve_dual_sdp
    monkeypatch.setattr(
        pipeline, "solve_dual_sdp", lambda problem: change(solve(problem))
    )


def test_dual_above_the_primal_is_not_certified(
    orthographic_scene, monkeypatch
) -> None:
    _patch_dual(
        monkeypatch,
        lambda dual: dataclasses.replace(
            dual, dual_value=dual.dual_value + 1.0
        ),
    )
    diagnostics = pipeline_solve(
        SolveRequest(orthographic_scene.correspondences)
    ).diagnostics
    assert diagnostics.duality_gap < 0
    assert not diagnostics.certified
    assert "negative_gap" in diagnostics.flags
    assert "gap_exceeded" not in diagnostics.flags


def test_empty_kernels_are_not_certified(
    orthographic_scene, monkeypatch
) -> None:
    _patch_dual(
        monkeypatch, lambda dual: dataclasses.replace(dual, empty_kernel=True)
    )
    solution = pipeline_solve(SolveRequest(orthographic_scene.correspondences))
    diagnostics = solution.diagnostics
    assert not diagnostics.certified
    assert "empty_kernel" in diagnostics.flags
    assert "gap_exceeded" not in diagnostics.flags
    truth = orthographic_scene.pose.rotation
    assert rotation_error_deg(truth, solution.pose.rotation) < 1e-3
