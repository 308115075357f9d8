"""Pose error metrics."""
import math

import numpy as np

from sonarpnp.errors import InvalidPose
from sonarpnp.type_aliases import FloatArray


def rotation_error_deg(r_gt: FloatArray, r_est: FloatArray) -> float:
    """
    Return the largest angle between matching rows of two rotations.

    Row dot products may leave [-1, 1] by 1e-9 through rounding; they
    are clamped. Anything further out means a matrix isn't a rotation.
    """
    dots = np.einsum("ij,ij->i", np.asarray(r_gt), np.asarray(r_est))
    if np.any(np.abs(dots) > 1 + 1e-9):
        raise InvalidPose(f"Row dot products {dots} exceed unit length.")
    return math.degrees(float(np.max(np.arccos(np.clip(dots, -1.0, 1.0)))))


def translation_errors(
    t_gt: FloatArray, t_est: FloatArray
) -> tuple[float, float]:
    """Return (|t_xy error|, |t_z error|); they are never combined."""
    difference = np.asarray(t_est, dtype=np.float64) - np.asarray(t_gt)
    return float(np.hypot(*difference[:2])), float(abs(difference[2]))
