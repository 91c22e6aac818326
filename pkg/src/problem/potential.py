"""
The effective potential K~ = K + (1/2) Laplacian V + (1/2)|grad V|^2.

Conjugating the generator by e^V turns the drifted operator into the
drift-free Schrödinger operator (1/2) Laplacian - K~; every spectral and
bound computation works with K~.
"""
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from src.models.fields import FieldEvaluationError, checked
from src.models.model_spec import ModelSpec

logger = logging.getLogger(__name__)

__all__ = ["EffectivePotential", "FieldEvaluationError", "effective_potential"]


@dataclass(frozen=True)
class EffectivePotential:
    """K~ for a model, evaluated pointwise and vectorized."""

    source: ModelSpec

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """
        Evaluate K~ on points of shape (n, d).

        Raises:
            FieldEvaluationError: If K, Laplacian V or grad V is non-finite
        """
        spec = self.source
        k = spec.K(points)
        if spec.potential.is_zero:
            return k
        lap = checked(spec.potential.laplacian(points), "Laplacian V", points)
        grad = spec.grad_V(points)
        return k + 0.5 * lap + 0.5 * np.einsum("ij,ij->i", grad, grad)

    def __call__(self, x: Any) -> np.ndarray:
        return self.evaluate(self.source.points(x))


def effective_potential(spec: ModelSpec, x: Any) -> float:
    """
    Evaluate K~ at a single point.

    Args:
        spec: Model definition
        x: Point in R^d (a scalar is accepted when d = 1)

    Returns:
        float: K(x) + Laplacian V(x)/2 + |grad V(x)|^2/2

    Raises:
        FieldEvaluationError: If any field is non-finite at x
    """
    points = spec.points(x)
    if points.shape[0] != 1:
        raise ValueError(f"effective_potential expects a single point, got {points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise FieldEvaluationError(f"Point {points[0].tolist()} is not finite")
    return float(EffectivePotential(spec).evaluate(points)[0])
