"""
Euler-Maruyama stepping for dX = grad V(X) dt + dB.
"""
import logging
from typing import Any

import numpy as np

from src.models.fields import FieldEvaluationError
from src.models.model_spec import ModelSpec

logger = logging.getLogger(__name__)


class SimulationError(Exception):
    """Raised when a trajectory cannot be advanced (non-finite drift or rates)."""
    pass


def euler_step(spec: ModelSpec, points: np.ndarray, dt: float, noise: np.ndarray) -> np.ndarray:
    """
    Advance every row of ``points`` by one step.

    Args:
        spec: Model definition
        points: Positions, shape (n, d)
        dt: Step size, dt > 0
        noise: Standard normals, shape (n, d)

    Returns:
        np.ndarray: points + grad V(points) dt + sqrt(dt) noise
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    try:
        drift = spec.grad_V(points)
    except FieldEvaluationError as e:
        logger.error(f"Drift evaluation failed: {str(e)}")
        raise SimulationError(f"Non-finite drift: {str(e)}")
    return points + drift * dt + np.sqrt(dt) * noise


def diffusion_step(spec: ModelSpec, x: Any, dt: float, noise: Any) -> np.ndarray:
    """
    One Euler-Maruyama step from a single point.

    Returns:
        np.ndarray: The new position, shape (d,)
    """
    point = spec.points(x)
    eps = np.asarray(noise, dtype=float).reshape(point.shape)
    return euler_step(spec, point, dt, eps)[0]
