"""
Low spectrum of the discretized operator and its storage.

Eigenvectors are stored as node functions phi~_n normalized in L^2(dx)
under the grid quadrature; the eigenfunctions of the drifted generator are
phi_n = e^{-V} phi~_n and are orthonormal in L^2(mu), mu = e^{2V} dx.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from src.models.model_spec import ModelSpec
from src.spectral.grid import Grid
from src.spectral.operator import DiscreteOperator, discretize

logger = logging.getLogger(__name__)

GAP_TOL = 1e-10
ORTHONORMALITY_TOL = 1e-8
DENSE_LIMIT = 2000


class SolverError(Exception):
    """Raised when the eigensolver fails to reach the residual tolerance."""

    def __init__(self, message: str, residuals: Optional[np.ndarray] = None):
        super().__init__(message)
        self.residuals = residuals


class DegenerateSpectrumError(Exception):
    """Raised when the ground state is not simple (lambda_1 - lambda_0 < 1e-10)."""
    pass


class InvalidDecompositionError(Exception):
    """Raised when a stored decomposition fails re-validation."""
    pass


def scale_by_exp(vectors: np.ndarray, log_factor: np.ndarray) -> np.ndarray:
    """
    Compute vectors * exp(log_factor) without overflow on entries that vanish.

    Zero entries stay zero even where exp(log_factor) would overflow.
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        magnitude = np.exp(np.log(np.abs(vectors)) + log_factor)
    return np.where(vectors == 0.0, 0.0, np.sign(vectors) * magnitude)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """
    Lowest eigenpairs of -L~ on a grid (shift removed).

    ``phi_tilde`` has shape (m_modes, nodes) and holds the L^2(dx)-orthonormal
    eigenfunctions; ``potential`` is V at the nodes.
    """

    grid: Grid
    eigenvalues: np.ndarray
    phi_tilde: np.ndarray
    potential: np.ndarray
    shift: float
    residuals: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def m_modes(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def phi(self) -> np.ndarray:
        """phi_n = e^{-V} phi~_n at the nodes."""
        return scale_by_exp(self.phi_tilde, -self.potential)

    @property
    def phi_mu(self) -> np.ndarray:
        """e^{2V} phi_n = e^{V} phi~_n, the density of phi_n against mu."""
        return scale_by_exp(self.phi_tilde, self.potential)

    @property
    def mu_density(self) -> np.ndarray:
        """e^{2V} at the nodes."""
        return np.exp(2.0 * self.potential)

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """<values, phi_n>_mu for every mode, by grid quadrature."""
        return self.phi_mu @ (self.weights * np.asarray(values, dtype=float))

    def mu_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """<f, g>_mu by grid quadrature."""
        density = scale_by_exp(np.asarray(f, dtype=float) * np.asarray(g, dtype=float), 2.0 * self.potential)
        return float(np.sum(self.weights * density))

    def gram(self) -> np.ndarray:
        """<phi~_i, phi~_j>_dx for all captured modes."""
        return (self.phi_tilde * self.weights) @ self.phi_tilde.T

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.m_modes))))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "mode": np.arange(self.m_modes),
                "lambda": self.eigenvalues,
                "residual": self.residuals,
            }
        )


def _solve(op: DiscreteOperator, m_modes: int, tol: float, method: str, maxiter: Optional[int]):
    if method == "dense":
        theta, vectors = scipy.linalg.eigh(op.dense(), subset_by_index=[0, m_modes - 1])
        return theta, vectors
    if method == "sparse":
        if op.matrix is None:
            raise ValueError("Sparse shift-invert needs an assembled matrix")
        # A is positive definite after the shift, so sigma = 0 targets the low end
        return eigsh(op.matrix, k=m_modes, sigma=0.0, which="LM", tol=tol * 1e-3, maxiter=maxiter)
    if method == "matrix-free":
        return eigsh(op.as_linear_operator(), k=m_modes, which="SA", tol=tol * 1e-3, maxiter=maxiter)
    raise ValueError(f"Unknown eigensolver method '{method}'")


def eigs_smallest(
    op: DiscreteOperator,
    m_modes: int,
    tol: float = 1e-8,
    method: str = "auto",
    maxiter: Optional[int] = None,
) -> SpectralDecomposition:
    """
    Compute the ``m_modes`` smallest eigenpairs of the discrete operator.

    Args:
        op: Discretized operator
        m_modes: Number of modes, at least 2 and well below the node count
        tol: Residual tolerance on |A v - theta v|, scaled by max(1, |theta|):
            absolute for |theta| <= 1, relative above (theta includes the shift)
        method: ``dense`` (LAPACK), ``sparse`` (ARPACK shift-invert at 0),
            ``matrix-free`` (ARPACK Lanczos on the stencil) or ``auto``
        maxiter: ARPACK iteration budget

    Returns:
        SpectralDecomposition: Eigenvalues with the shift removed and
            sign-normalized eigenfunctions

    Raises:
        SolverError: On non-convergence or residuals above ``tol``
        DegenerateSpectrumError: If lambda_1 - lambda_0 < 1e-10
    """
    if m_modes < 2:
        raise ValueError(f"m_modes must be >= 2, got {m_modes}")
    if m_modes >= op.interior_size:
        raise ValueError(f"m_modes={m_modes} must be below the number of unknowns {op.interior_size}")
    if method == "auto":
        if op.matrix_free:
            method = "matrix-free"
        elif op.interior_size <= DENSE_LIMIT:
            method = "dense"
        else:
            method = "sparse"

    logger.info(f"Computing {m_modes} smallest eigenpairs ({method}, {op.interior_size} unknowns)")
    try:
        theta, vectors = _solve(op, m_modes, tol, method, maxiter)
    except ArpackNoConvergence as e:
        best = np.array(
            [np.linalg.norm(op.interior_action(v) - lam * v) for lam, v in zip(e.eigenvalues, e.eigenvectors.T)]
        )
        logger.error(f"Eigensolver did not converge; best residuals {best.tolist()}")
        raise SolverError(f"Eigensolver did not converge within the iteration budget", residuals=best)

    order = np.argsort(theta)
    theta = np.asarray(theta)[order]
    vectors = np.asarray(vectors)[:, order]
    vectors = vectors / np.linalg.norm(vectors, axis=0)

    residuals = np.array(
        [np.linalg.norm(op.interior_action(vectors[:, n]) - theta[n] * vectors[:, n]) for n in range(m_modes)]
    )
    if np.any(residuals > tol * np.maximum(1.0, np.abs(theta))):
        logger.error(f"Eigen-residuals above tolerance: {residuals.tolist()}")
        raise SolverError(f"Eigen-residuals exceed tol={tol}", residuals=residuals)

    eigenvalues = theta - op.shift
    if eigenvalues[1] - eigenvalues[0] < GAP_TOL:
        logger.error(f"Degenerate ground state: lambda_1 - lambda_0 = {eigenvalues[1] - eigenvalues[0]:.3g}")
        raise DegenerateSpectrumError(
            f"Ground state is not simple (gap {eigenvalues[1] - eigenvalues[0]:.3g} < {GAP_TOL})"
        )

    grid = op.grid
    phi_tilde = np.zeros((m_modes, grid.size))
    phi_tilde[:, grid.interior] = vectors.T / np.sqrt(grid.spacing ** grid.dimension)

    if phi_tilde[0].sum() < 0:
        phi_tilde[0] = -phi_tilde[0]
    peak = np.max(np.abs(phi_tilde[0]))
    if phi_tilde[0].min() < -1e-8 * peak:
        logger.warning("Ground state changes sign beyond round-off; check the grid resolution")
    for n in range(1, m_modes):
        if phi_tilde[n, np.argmax(np.abs(phi_tilde[n]))] < 0:
            phi_tilde[n] = -phi_tilde[n]

    logger.info(f"Lowest eigenvalues: {np.round(eigenvalues[:min(5, m_modes)], 8).tolist()}")
    return SpectralDecomposition(
        grid=grid,
        eigenvalues=eigenvalues,
        phi_tilde=phi_tilde,
        potential=np.zeros(grid.size),
        shift=op.shift,
        residuals=residuals,
    )


def attach_model(dec: SpectralDecomposition, spec: ModelSpec) -> SpectralDecomposition:
    """Return the decomposition with V at the nodes and the model fingerprints recorded."""
    metadata = dict(dec.metadata)
    metadata.update(
        model=spec.descriptor(),
        model_hash=spec.fingerprint(),
        potential_hash=spec.potential_fingerprint(),
    )
    return SpectralDecomposition(
        grid=dec.grid,
        eigenvalues=dec.eigenvalues,
        phi_tilde=dec.phi_tilde,
        potential=spec.V(dec.grid.nodes),
        shift=dec.shift,
        residuals=dec.residuals,
        metadata=metadata,
    )


def decompose(
    spec: ModelSpec,
    grid: Grid,
    m_modes: int,
    tol: float = 1e-8,
    method: str = "auto",
) -> SpectralDecomposition:
    """Discretize ``spec`` on ``grid`` and return its low spectrum with V attached."""
    return attach_model(eigs_smallest(discretize(spec, grid), m_modes, tol, method), spec)


def box_stability(
    spec: ModelSpec,
    grid: Grid,
    m_modes: int = 2,
    tol: float = 1e-8,
    factor: float = 1.5,
) -> Dict[str, float]:
    """
    Change of lambda_0 and lambda_1 when the box is enlarged at equal spacing.

    Returns:
        Dict[str, float]: ``delta_lambda0``, ``delta_lambda1`` and the enlarged radius
    """
    base = eigs_smallest(discretize(spec, grid), m_modes, tol)
    enlarged_grid = grid.with_radius(grid.box_radius * factor)
    enlarged = eigs_smallest(discretize(spec, enlarged_grid), m_modes, tol)
    deltas = np.abs(enlarged.eigenvalues[:2] - base.eigenvalues[:2])
    logger.info(
        f"Box stability R={grid.box_radius} -> {enlarged_grid.box_radius}: "
        f"d lambda0={deltas[0]:.3g}, d lambda1={deltas[1]:.3g}"
    )
    return {
        "delta_lambda0": float(deltas[0]),
        "delta_lambda1": float(deltas[1]),
        "enlarged_radius": float(enlarged_grid.box_radius),
    }


def save_decomposition(dec: SpectralDecomposition, path: Union[str, Path]) -> Path:
    """
    Store the decomposition as an ``.npz`` archive with a JSON header.

    The header records the grid parameters, the shift m and the V
    descriptor hash.
    """
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(dec.metadata, grid=dec.grid.descriptor(), shift=dec.shift)
    np.savez(
        path,
        eigenvalues=dec.eigenvalues,
        phi_tilde=dec.phi_tilde,
        potential=dec.potential,
        residuals=dec.residuals,
        header=np.array(json.dumps(header, sort_keys=True)),
    )
    logger.info(f"Saved decomposition with {dec.m_modes} modes to {path}")
    return path


def validate(dec: SpectralDecomposition, tol: float = ORTHONORMALITY_TOL) -> SpectralDecomposition:
    """
    Re-check orthonormality and the simple ground state.

    Raises:
        InvalidDecompositionError: If either property fails
    """
    error = dec.orthonormality_error()
    if error > tol:
        raise InvalidDecompositionError(f"Eigenvectors are not orthonormal (max deviation {error:.3g})")
    if dec.gap < GAP_TOL:
        raise InvalidDecompositionError(f"Stored ground state is degenerate (gap {dec.gap:.3g})")
    return dec


def load_decomposition(path: Union[str, Path]) -> SpectralDecomposition:
    """Load a stored decomposition and re-validate it before use."""
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        grid = Grid(**header.pop("grid"))
        shift = float(header.pop("shift"))
        dec = SpectralDecomposition(
            grid=grid,
            eigenvalues=archive["eigenvalues"],
            phi_tilde=archive["phi_tilde"],
            potential=archive["potential"],
            shift=shift,
            residuals=archive["residuals"],
            metadata=header,
        )
    logger.info(f"Loaded decomposition from {path}; validating")
    return validate(dec)
