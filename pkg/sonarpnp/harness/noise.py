"""Measurement noise for range-bearing sensors."""
import numpy as np
from loguru import logger

from sonarpnp.errors import InvalidConfiguration
from sonarpnp.models import CorrespondenceSet


def apply_polar_noise(
    c: CorrespondenceSet, sigma: float, rng: np.random.Generator
) -> tuple[CorrespondenceSet, int]:
    """
    Perturb range and bearing of every measurement.

    r = |m| and theta = atan2(u, v) each get independent N(0, sigma^2)
    noise; sigma is meters for r and radians for theta. Ranges pushed
    below zero are clamped to zero and counted. sigma = 0 returns c
    itself.
    """
    if not sigma >= 0:
        raise InvalidConfiguration(f"sigma must be non-negative, got {sigma}.")
    if sigma == 0:
        return c, 0

    u, v = c.measurements[:, 0], c.measurements[:, 1]
    r = np.hypot(u, v) + rng.normal(0.0, sigma, c.count)
    theta = np.arctan2(u, v) + rng.normal(0.0, sigma, c.count)

    clamped = int(np.count_nonzero(r < 0))
    if clamped:
        logger.warning(f"Clamped {clamped} negative noisy ranges to zero.")
        r = np.maximum(r, 0.0)

    noisy = np.column_stack((r * np.sin(theta), r * np.cos(theta)))
    return c.with_measurements(noisy), clamped
