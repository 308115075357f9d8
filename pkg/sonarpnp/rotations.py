"""Helpers for building and repairing rotation matrices."""
import numpy as np
from scipy.spatial.transform import Rotation

from sonarpnp.type_aliases import FloatArray


def project_to_so3(matrix: FloatArray) -> FloatArray:
    """
    Return the rotation nearest to matrix in the Frobenius norm.

    Orthogonal Procrustes with the determinant forced to +1.
    """
    u, _, vt = np.linalg.svd(matrix)
    correction = np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt)) or 1.0])
    return u @ correction @ vt


def random_rotation(rng: np.random.Generator) -> FloatArray:
    """Sample a rotation from a uniformly random unit quaternion."""
    return Rotation.random(random_state=rng).as_matrix()


def exp_so3(rotation_vector: FloatArray) -> FloatArray:
    """Return the rotation of an axis-angle vector."""
    return Rotation.from_rotvec(rotation_vector).as_matrix()


def skew(v: FloatArray) -> FloatArray:
    """Return [v]x, the matrix with [v]x @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def angle_between(a: FloatArray, b: FloatArray) -> float:
    """Return the geodesic angle in radians between two rotations."""
    return float(Rotation.from_matrix(a.T @ b).magnitude())


def vec(rotation: FloatArray) -> FloatArray:
    """Stack the columns of a 3x3 matrix into a 9-vector."""
    return np.asarray(rotation).reshape(9, order="F")


def unvec(entries: FloatArray) -> FloatArray:
    """Inverse of vec: read 9 entries column-wise into a 3x3 matrix."""
    return np.asarray(entries[:9]).reshape((3, 3), order="F")
