"""
Named test functions phi used by estimators and verification checks.

Descriptors are short strings: ``one``, ``zero``, ``x`` (first coordinate),
``x2`` (squared norm) and ``bump:center,width`` (Gaussian bump centred at
``center`` along every axis).
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TestFunction:
    """A vectorized function of points (n, d) -> (n,) with a boundedness flag."""

    __test__ = False

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    bounded: bool = True
    nonnegative: bool = True

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(points), dtype=float)


def _bump(center: float, width: float) -> Callable[[np.ndarray], np.ndarray]:
    def func(points: np.ndarray) -> np.ndarray:
        offset = points - center
        return np.exp(-np.einsum("ij,ij->i", offset, offset) / (2.0 * width ** 2))
    return func


def parse_test_function(descriptor: str) -> TestFunction:
    """
    Parse a test-function descriptor.

    Args:
        descriptor: One of ``one``, ``zero``, ``x``, ``x2``, ``bump:c,w``

    Returns:
        TestFunction: The described function

    Raises:
        ValueError: If the descriptor is not recognized
    """
    text = descriptor.strip().lower()
    if text == "one":
        return TestFunction(text, lambda p: np.ones(p.shape[0]))
    if text == "zero":
        return TestFunction(text, lambda p: np.zeros(p.shape[0]))
    if text == "x":
        return TestFunction(text, lambda p: p[:, 0].copy(), bounded=False, nonnegative=False)
    if text == "x2":
        return TestFunction(text, lambda p: np.einsum("ij,ij->i", p, p), bounded=False)
    if text.startswith("bump:"):
        try:
            center, width = (float(v) for v in text[len("bump:"):].split(","))
        except ValueError:
            raise ValueError(f"Bump descriptor must be 'bump:center,width', got '{descriptor}'")
        if width <= 0:
            raise ValueError(f"Bump width must be positive, got {width}")
        return TestFunction(text, _bump(center, width))
    raise ValueError(f"Unknown test function '{descriptor}'")
