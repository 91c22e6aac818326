"""
Finite-difference discretization of -L~ = -(1/2) Laplacian + K~ on a
Dirichlet box.

Unknowns live on the interior nodes; boundary nodes carry the homogeneous
Dirichlet value. The diagonal is shifted by m = max(0, 1 - min K~) so the
discrete operator is positive definite.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from src.models.fields import FieldEvaluationError
from src.models.model_spec import ModelSpec
from src.problem.potential import EffectivePotential
from src.spectral.grid import Grid

logger = logging.getLogger(__name__)

MAX_DIMENSION = 3


class DiscretizationError(Exception):
    """Raised when the operator cannot be assembled on the grid."""
    pass


class NonConfiningError(Exception):
    """Raised when K~ does not confine on the box, so the spectrum is not discrete."""
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """
    The shifted operator A = -(1/2) Laplacian_h + diag(K~ + m).

    ``matrix`` holds the sparse interior matrix for d <= 2; in the
    matrix-free case the stencil is applied directly.
    """

    grid: Grid
    ktilde: np.ndarray
    shift: float
    matrix: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def matrix_free(self) -> bool:
        return self.matrix is None

    @property
    def interior_shape(self):
        return (self.grid.points_per_axis - 2,) * self.grid.dimension

    @property
    def interior_size(self) -> int:
        return int(np.prod(self.interior_shape))

    @property
    def diagonal(self) -> np.ndarray:
        """K~ + m on the interior nodes."""
        return self.ktilde[self.grid.interior] + self.shift

    def interior_action(self, u: np.ndarray) -> np.ndarray:
        """Apply A to a vector of interior values."""
        u = np.asarray(u, dtype=float).ravel()
        if self.matrix is not None:
            return self.matrix @ u
        h2 = self.grid.spacing ** 2
        cube = u.reshape(self.interior_shape)
        padded = np.pad(cube, 1)
        laplacian = np.zeros_like(cube)
        for axis in range(self.grid.dimension):
            lo = [slice(1, -1)] * self.grid.dimension
            hi = [slice(1, -1)] * self.grid.dimension
            lo[axis] = slice(0, -2)
            hi[axis] = slice(2, None)
            laplacian += padded[tuple(lo)] + padded[tuple(hi)] - 2.0 * cube
        return (-0.5 * laplacian / h2).ravel() + self.diagonal * u

    def action(self, v: np.ndarray) -> np.ndarray:
        """
        Apply A to a node-indexed vector.

        Boundary entries of ``v`` are ignored (Dirichlet: zero outside the
        interior) and the result is zero on the boundary.
        """
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.grid.size)
        out[self.grid.interior] = self.interior_action(v[self.grid.interior])
        return out

    def as_linear_operator(self) -> LinearOperator:
        n = self.interior_size
        return LinearOperator((n, n), matvec=self.interior_action, dtype=float)

    def dense(self) -> np.ndarray:
        """Dense interior matrix (small grids only)."""
        if self.matrix is not None:
            return self.matrix.toarray()
        return np.column_stack([self.interior_action(e) for e in np.eye(self.interior_size)])


def _laplacian_matrix(points: int, spacing: float, dimension: int) -> sp.csr_matrix:
    """Sparse Dirichlet Laplacian on ``points`` interior nodes per axis."""
    second = sp.diags(
        [np.ones(points - 1), -2.0 * np.ones(points), np.ones(points - 1)],
        [-1, 0, 1],
        shape=(points, points),
        format="csr",
    ) / spacing ** 2
    identity = sp.identity(points, format="csr")
    laplacian = second
    for _ in range(dimension - 1):
        laplacian = sp.kron(laplacian, identity, format="csr") + sp.kron(
            sp.identity(laplacian.shape[0], format="csr"), second, format="csr"
        )
    return laplacian.tocsr()


def discretize(spec: ModelSpec, grid: Grid, matrix_free: Optional[bool] = None) -> DiscreteOperator:
    """
    Assemble -(1/2) Laplacian_h + diag(K~ + m) with second-order central
    differences and Dirichlet boundary.

    Args:
        spec: Model definition
        grid: Grid of the same dimension as the model
        matrix_free: Force (or forbid) stencil application; defaults to
            matrix-free for d = 3

    Returns:
        DiscreteOperator: The shifted operator with its shift m recorded

    Raises:
        DiscretizationError: On dimension mismatch or non-finite K~ at a node
    """
    if grid.dimension != spec.dimension:
        raise DiscretizationError(
            f"Grid dimension {grid.dimension} does not match model dimension {spec.dimension}"
        )
    if grid.dimension > MAX_DIMENSION:
        raise DiscretizationError(f"Dimensions above {MAX_DIMENSION} are not supported")
    if matrix_free is None:
        matrix_free = grid.dimension >= 3
    elif not matrix_free and grid.dimension >= 3:
        raise DiscretizationError("d = 3 grids need the matrix-free operator")

    logger.info(
        f"Discretizing {spec.name} on {grid.points_per_axis}^{grid.dimension} nodes "
        f"(R={grid.box_radius}, h={grid.spacing:.4g}, matrix_free={matrix_free})"
    )
    try:
        ktilde = EffectivePotential(spec).evaluate(grid.nodes)
    except FieldEvaluationError as e:
        logger.error(f"Effective potential failed on the grid: {str(e)}")
        raise DiscretizationError(f"Effective potential is not finite on the grid: {str(e)}")
    bad = ~np.isfinite(ktilde)
    if bad.any():
        node = int(np.argmax(bad))
        raise DiscretizationError(
            f"K~ is not finite at node {node} ({grid.nodes[node].tolist()})"
        )

    shift = max(0.0, 1.0 - float(ktilde.min()))
    matrix = None
    if not matrix_free:
        laplacian = _laplacian_matrix(grid.points_per_axis - 2, grid.spacing, grid.dimension)
        diagonal = sp.diags(ktilde[grid.interior] + shift, format="csr")
        matrix = (-0.5 * laplacian + diagonal).tocsr()

    return DiscreteOperator(grid=grid, ktilde=ktilde, shift=shift, matrix=matrix)


def check_confinement(op: DiscreteOperator, margin: float = 1.0) -> float:
    """
    Require K~ on the box boundary to exceed its grid minimum by ``margin``.

    Returns:
        float: The boundary excess min_boundary K~ - min K~

    Raises:
        NonConfiningError: If K~ does not grow towards the box boundary
    """
    boundary = op.ktilde[~op.grid.interior]
    excess = float(boundary.min() - op.ktilde.min())
    if excess < margin:
        logger.error(f"K~ rises only {excess:.3g} towards the box boundary")
        raise NonConfiningError(
            f"K~ is not confining on the box (boundary excess {excess:.3g} < {margin}); "
            "the spectrum is not discrete"
        )
    return excess
