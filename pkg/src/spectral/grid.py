"""
Uniform tensor grids on the box [-R, R]^d.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Grid:
    """
    Uniform tensor grid with ``points_per_axis`` nodes per axis on [-R, R]^d.

    The outermost nodes lie on the box boundary, where the Dirichlet
    condition pins every eigenvector to zero. Nodes are flattened in C order
    (last axis fastest).
    """

    dimension: int
    box_radius: float
    points_per_axis: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"Grid dimension must be positive, got {self.dimension}")
        if self.points_per_axis < 16 and not (self.points_per_axis >= 3 and self.dimension == 1):
            raise ValueError(f"points_per_axis must be >= 16, got {self.points_per_axis}")
        if not self.box_radius > 0:
            raise ValueError(f"box_radius must be positive, got {self.box_radius}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.box_radius / (self.points_per_axis - 1)

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.box_radius, self.box_radius, self.points_per_axis)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (size, d)."""
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weight per node; they sum to (2R)^d."""
        w = np.full(self.points_per_axis, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        weights = w
        for _ in range(self.dimension - 1):
            weights = np.multiply.outer(weights, w)
        return weights.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes strictly inside the box."""
        index = np.indices(self.shape).reshape(self.dimension, -1)
        return np.all((index > 0) & (index < self.points_per_axis - 1), axis=0)

    @cached_property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def nearest_index(self, point: Union[float, Sequence[float], np.ndarray]) -> int:
        """Flat index of the node nearest to ``point`` (snapping onto the grid)."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.dimension,):
            raise ValueError(f"Expected a point of dimension {self.dimension}, got {p.shape}")
        idx = np.clip(
            np.rint((p + self.box_radius) / self.spacing).astype(int), 0, self.points_per_axis - 1
        )
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def resolve(self, node: Any) -> np.ndarray:
        """Accept flat node indices or points and return flat indices."""
        if isinstance(node, (int, np.integer)):
            return np.asarray([int(node)])
        arr = np.asarray(node)
        if arr.dtype.kind in "iu":
            return arr.ravel().astype(int)
        points = arr.astype(float).reshape(-1, self.dimension)
        return np.asarray([self.nearest_index(p) for p in points])

    def with_radius(self, box_radius: float) -> "Grid":
        """Grid of the same spacing on a box of a different radius."""
        n = int(round(2.0 * box_radius / self.spacing)) + 1
        return Grid(self.dimension, (n - 1) * self.spacing / 2.0, n)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "box_radius": self.box_radius,
            "points_per_axis": self.points_per_axis,
        }
