"""
Point-to-line registration form of the sonar PnP problem.

Under the orthographic approximation every measurement m_i lifts to a
line through o_i = [u_i, v_i, 0] with direction d = [0, 0, 1], and the
pose has to bring R p_i + t onto that line. The translation is solved
in closed form for a fixed rotation and substituted back, which leaves
a quadratic form in the homogenized rotation vector

    r~ = [c_1, c_2, c_3, h]  (columns of R, then h)

subject to the rotation constraints built by build_constraint_matrices.
"""
import dataclasses
import itertools
import typing as t

import numpy as np

from sonarpnp.errors import DegenerateInput, RecoveryFailure
from sonarpnp.models import CorrespondenceSet
from sonarpnp.rotations import project_to_so3, unvec, vec
from sonarpnp.type_aliases import FloatArray

#: Size of the homogenized rotation vector.
DIM = 10
#: Index of the homogenizing scalar h inside r~.
H_INDEX = 9
LINE_DIRECTION = np.array([0.0, 0.0, 1.0])


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class PtLCost:
    """Anchors o_i, the shared line direction d and C = I - d d^T."""

    anchor_points: FloatArray
    line_direction: FloatArray
    weight: FloatArray


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class QcqpProblem:
    """
    min r~^T Q r~ subject to r~^T A_j r~ = c_j.

    centroid_world and centroid_anchor are the shifts removed from the
    data before Q was built; translations are recovered from them.
    """

    cost: FloatArray
    constraints: FloatArray
    constraint_values: FloatArray
    centroid_world: FloatArray
    centroid_anchor: FloatArray
    weight: FloatArray

    def objective(self, r_tilde: FloatArray) -> float:
        """Evaluate r~^T Q r~."""
        return float(r_tilde @ self.cost @ r_tilde)

    def residuals(self, r_tilde: FloatArray) -> FloatArray:
        """Return r~^T A_j r~ - c_j for every constraint."""
        values = np.einsum("i,jik,k->j", r_tilde, self.constraints, r_tilde)
        return values - self.constraint_values


def homogenize(rotation: FloatArray, h: float = 1.0) -> FloatArray:
    """Build r~ from a rotation matrix and the homogenizing scalar."""
    return np.append(vec(rotation), h)


def build_ptl_cost(c: CorrespondenceSet) -> PtLCost:
    """Lift every measurement onto the z = 0 plane of the sonar frame."""
    anchors = np.column_stack((c.measurements, np.zeros(c.count)))
    weight = np.eye(3) - np.outer(LINE_DIRECTION, LINE_DIRECTION)
    return PtLCost(anchors, LINE_DIRECTION.copy(), weight)


def ptl_residual(
    cost: PtLCost,
    c: CorrespondenceSet,
    rotation: FloatArray,
    translation: FloatArray,
) -> float:
    """Return sum_i |R p_i + t - o_i|^2 weighted by C."""
    offsets = c.world_points @ rotation.T + translation - cost.anchor_points
    return float(np.einsum("ni,ij,nj->", offsets, cost.weight, offsets))


def _lifted_rows(
    world_points: FloatArray, anchors: FloatArray
) -> FloatArray:
    """
    Return E_i (3x10) with E_i r~ = R p_i - o_i h for every i.

    R p = sum_j p_j c_j, so block j of E_i is p_ij * I_3.
    """
    count = len(world_points)
    rows = np.zeros((count, 3, DIM))
    for j in range(3):
        rows[:, :, 3 * j : 3 * j + 3] = (
            world_points[:, j, None, None] * np.eye(3)
        )
    rows[:, :, H_INDEX] = -anchors
    return rows


def marginalize_translation(
    cost: PtLCost, c: CorrespondenceSet
) -> QcqpProblem:
    """
    Eliminate the translation and return the rotation-only QCQP.

    For fixed R the optimal translation in the plane orthogonal to d is
    C (mean(o) - R mean(p)); substituting it leaves
    sum_i |C (R (p_i - mean p) - (o_i - mean o))|^2 = r~^T Q r~ at h = 1.
    The data are centered first, which keeps Q well conditioned.
    """
    if c.count < 3:
        raise DegenerateInput(
            f"Translation elimination needs 3 correspondences, got {c.count}."
        )
    normal_system = c.count * cost.weight
    if np.linalg.matrix_rank(normal_system) != np.linalg.matrix_rank(
        cost.weight
    ):
        raise DegenerateInput("The translation normal system is singular.")

    centroid_world = c.world_points.mean(axis=0)
    centroid_anchor = cost.anchor_points.mean(axis=0)
    rows = _lifted_rows(
        c.world_points - centroid_world,
        cost.anchor_points - centroid_anchor,
    )
    q = np.einsum("nki,kl,nlj->ij", rows, cost.weight, rows)
    q = 0.5 * (q + q.T)

    constraints, values = build_constraint_matrices()
    return QcqpProblem(
        cost=q,
        constraints=constraints,
        constraint_values=values,
        centroid_world=centroid_world,
        centroid_anchor=centroid_anchor,
        weight=cost.weight,
    )


def _entry(row: int, column: int) -> int:
    """Index of R[row, column] inside r~."""
    return 3 * column + row


class _QuadraticForm:
    """Accumulates a scalar quadratic equation as a symmetric matrix."""

    def __init__(self) -> None:
        self.matrix = np.zeros((DIM, DIM))

    def add(self, a: int, b: int, coefficient: float) -> "_QuadraticForm":
        """Add coefficient * x_a * x_b."""
        self.matrix[a, b] += 0.5 * coefficient
        self.matrix[b, a] += 0.5 * coefficient
        return self


def build_constraint_matrices() -> tuple[FloatArray, FloatArray]:
    """
    Return the 22 constraint matrices A_j and right-hand sides c_j.

    In order: 6 from R^T R = h^2 I, 6 from R R^T = h^2 I, 9 from the
    cyclic row cross products r_a x r_b = h r_c and h^2 = 1 last.
    Only the last constraint has a non-zero right-hand side.
    """
    forms: list[_QuadraticForm] = []

    # Column Gram matrix.
    for i, j in itertools.combinations_with_replacement(range(3), 2):
        form = _QuadraticForm()
        for k in range(3):
            form.add(_entry(k, i), _entry(k, j), 1.0)
        if i == j:
            form.add(H_INDEX, H_INDEX, -1.0)
        forms.append(form)

    # Row Gram matrix.
    for i, j in itertools.combinations_with_replacement(range(3), 2):
        form = _QuadraticForm()
        for k in range(3):
            form.add(_entry(i, k), _entry(j, k), 1.0)
        if i == j:
            form.add(H_INDEX, H_INDEX, -1.0)
        forms.append(form)

    # Right-hand rule on the rows: (r_a x r_b)_m - h r_c[m] = 0.
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for m, m1, m2 in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            form = _QuadraticForm()
            form.add(_entry(a, m1), _entry(b, m2), 1.0)
            form.add(_entry(a, m2), _entry(b, m1), -1.0)
            form.add(H_INDEX, _entry(c, m), -1.0)
            forms.append(form)

    homogenization = _QuadraticForm().add(H_INDEX, H_INDEX, 1.0)
    forms.append(homogenization)

    matrices = np.stack([form.matrix for form in forms])
    values = np.zeros(len(forms))
    values[-1] = 1.0
    return matrices, values


def recover_rotation_rank1(kernel_vector: FloatArray) -> FloatArray:
    """
    Read a rotation from a one-dimensional certificate kernel.

    The vector is scaled so h = +1, reshaped column-wise and projected
    onto SO(3).
    """
    h = kernel_vector[H_INDEX]
    if abs(h) < 1e-8:
        raise RecoveryFailure(
            f"Kernel vector has h = {h:.3g}; its scale is undetermined."
        )
    return project_to_so3(unvec(kernel_vector / h))


def recover_translation_xy(
    rotation: FloatArray, cost: PtLCost, c: CorrespondenceSet
) -> FloatArray:
    """
    Return the optimal [t_x, t_y] for a fixed rotation.

    t = C (mean(o) - R mean(p)); its component along d is zero by
    construction and is not returned.
    """
    centroid_world = c.world_points.mean(axis=0)
    centroid_anchor = cost.anchor_points.mean(axis=0)
    translation = cost.weight @ (centroid_anchor - rotation @ centroid_world)
    return translation[:2]


def lower_bound_holds(
    problem: QcqpProblem,
    rotations: t.Iterable[FloatArray],
    bound: float,
    tol: float = 1e-8,
) -> bool:
    """Check weak duality: every feasible r~ costs at least the bound."""
    return all(
        problem.objective(homogenize(rotation)) >= bound - tol
        for rotation in rotations
    )
