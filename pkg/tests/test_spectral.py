"""
Unit tests for grids, the discrete operator, eigensolves and eigen-expansions.
"""
import math
import shutil
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from src.models.families import harmonic_model, ou_model, yule_model
from src.models.model_spec import BoundParams
from src.spectral.decomposition import (
    DegenerateSpectrumError,
    InvalidDecompositionError,
    SolverError,
    box_stability,
    decompose,
    eigs_smallest,
    load_decomposition,
    save_decomposition,
)
from src.spectral.expansion import (
    eigenfunction_envelope_check,
    heat_kernel,
    heat_kernel_row,
    mu_phi0,
    nu_density,
    project_pi,
    semigroup_apply,
    trace_partial_sums,
)
from src.spectral.grid import Grid
from src.spectral.operator import (
    DiscreteOperator,
    DiscretizationError,
    NonConfiningError,
    check_confinement,
    discretize,
)

HARMONIC_GRID = Grid(1, 8.0, 401)


def setUpModule():
    global HARMONIC, OU
    HARMONIC = decompose(harmonic_model(), HARMONIC_GRID, 20)
    OU = decompose(ou_model(c=-1.0, kappa=0.3), HARMONIC_GRID, 8)


class TestGrid(unittest.TestCase):
    """Test cases for the tensor grid."""

    def test_weights_and_nodes(self):
        """Trapezoid weights sum to the box volume."""
        grid = Grid(2, 3.0, 31)
        self.assertAlmostEqual(grid.weights.sum(), 36.0)
        self.assertEqual(grid.nodes.shape, (31 * 31, 2))
        self.assertEqual(int(grid.interior.sum()), 29 * 29)

    def test_nearest_index(self):
        """Points snap to the nearest node."""
        grid = Grid(1, 1.0, 21)
        index = grid.nearest_index(0.26)
        self.assertAlmostEqual(grid.nodes[index, 0], 0.3)
        self.assertEqual(grid.resolve(5).tolist(), [5])
        self.assertEqual(grid.resolve([0.0]).tolist(), [10])

    def test_validation(self):
        """Too few points or a non-positive radius are rejected."""
        with self.assertRaises(ValueError):
            Grid(2, 1.0, 8)
        with self.assertRaises(ValueError):
            Grid(1, 0.0, 101)

    def test_with_radius_keeps_spacing(self):
        """Enlarging the box keeps h."""
        enlarged = HARMONIC_GRID.with_radius(12.0)
        self.assertAlmostEqual(enlarged.spacing, HARMONIC_GRID.spacing)
        self.assertAlmostEqual(enlarged.box_radius, 12.0)


class TestOperator(unittest.TestCase):
    """Test cases for the finite-difference operator."""

    def test_shift(self):
        """m = max(0, 1 - min K~)."""
        op = discretize(ou_model(c=-1.0, kappa=0.3), HARMONIC_GRID)
        self.assertAlmostEqual(op.shift, 1.2)
        self.assertAlmostEqual(discretize(harmonic_model(), HARMONIC_GRID).shift, 1.0)

    def test_dimension_mismatch(self):
        """Grid and model dimensions must agree."""
        with self.assertRaises(DiscretizationError):
            discretize(harmonic_model(2), HARMONIC_GRID)

    def test_matrix_free_matches_matrix(self):
        """The stencil reproduces the assembled matrix."""
        grid = Grid(2, 4.0, 21)
        op = discretize(harmonic_model(2), grid)
        free = discretize(harmonic_model(2), grid, matrix_free=True)
        u = np.random.default_rng(0).standard_normal(op.interior_size)
        self.assertTrue(np.allclose(op.interior_action(u), free.interior_action(u)))

    def test_confinement(self):
        """K~ constant on the box is rejected as not confining."""
        with self.assertRaises(NonConfiningError):
            check_confinement(discretize(yule_model(0.5), HARMONIC_GRID))
        self.assertGreater(check_confinement(discretize(harmonic_model(), HARMONIC_GRID)), 1.0)


class TestDecomposition(unittest.TestCase):
    """Test cases for the low spectrum."""

    def test_harmonic_spectrum(self):
        """Eigenvalues n + 1/2."""
        for n in range(5):
            self.assertAlmostEqual(HARMONIC.eigenvalues[n], n + 0.5, delta=5e-3)
        self.assertAlmostEqual(HARMONIC.eigenvalues[0], 0.5, delta=1e-3)

    def test_orthonormality_and_residuals(self):
        """Gram matrix is the identity and residuals are below tolerance."""
        self.assertLess(HARMONIC.orthonormality_error(), 1e-8)
        self.assertTrue(np.all(HARMONIC.residuals <= 1e-8 * np.maximum(1.0, HARMONIC.eigenvalues + HARMONIC.shift)))

    def test_sign_convention(self):
        """phi~_0 is positive and every mode peaks positively."""
        peak = np.max(np.abs(HARMONIC.phi_tilde[0]))
        self.assertGreaterEqual(HARMONIC.phi_tilde[0].min(), -1e-8 * peak)
        for n in range(1, HARMONIC.m_modes):
            row = HARMONIC.phi_tilde[n]
            self.assertGreater(row[np.argmax(np.abs(row))], 0.0)

    def test_ou_shift_law(self):
        """lambda_n = kappa + n and eigenvectors do not depend on kappa."""
        for n in range(4):
            self.assertAlmostEqual(OU.eigenvalues[n], 0.3 + n, delta=2e-3)
        other = decompose(ou_model(c=-1.0, kappa=0.0), HARMONIC_GRID, 8)
        self.assertTrue(np.allclose(other.eigenvalues + 0.3, OU.eigenvalues, atol=1e-8))
        self.assertLess(np.max(np.abs(other.phi_tilde - OU.phi_tilde)), 1e-8)

    def test_mu_orthonormality(self):
        """phi_n are orthonormal in L^2(mu) under grid quadrature."""
        self.assertAlmostEqual(OU.mu_inner(OU.phi[0], OU.phi[0]), 1.0, places=8)
        self.assertAlmostEqual(OU.mu_inner(OU.phi[1], OU.phi[2]), 0.0, places=8)

    def test_sparse_agrees_with_dense(self):
        """Shift-invert ARPACK reproduces the dense eigenvalues."""
        op = discretize(harmonic_model(), HARMONIC_GRID)
        dense = eigs_smallest(op, 4, method="dense")
        sparse = eigs_smallest(op, 4, method="sparse")
        self.assertTrue(np.allclose(dense.eigenvalues, sparse.eigenvalues, atol=1e-7))
        self.assertLess(np.max(np.abs(dense.phi_tilde - sparse.phi_tilde)), 1e-6)

    def test_two_dimensional(self):
        """lambda_0 = 1 in two dimensions."""
        dec = decompose(harmonic_model(2), Grid(2, 6.0, 41), 3)
        self.assertAlmostEqual(dec.eigenvalues[0], 1.0, delta=2e-2)
        self.assertAlmostEqual(dec.eigenvalues[1], 2.0, delta=5e-2)

    def test_three_dimensional_matrix_free(self):
        """The matrix-free path resolves lambda_0 = 3/2 in three dimensions."""
        dec = decompose(harmonic_model(3), Grid(3, 5.0, 21), 2)
        self.assertAlmostEqual(dec.eigenvalues[0], 1.5, delta=5e-2)

    def test_refinement_order(self):
        """Halving h cuts the lambda_0 error by at least three."""
        coarse = decompose(harmonic_model(), Grid(1, 8.0, 101), 2)
        fine = decompose(harmonic_model(), Grid(1, 8.0, 201), 2)
        self.assertGreaterEqual(abs(coarse.eigenvalues[0] - 0.5) / abs(fine.eigenvalues[0] - 0.5), 3.0)

    def test_fine_grid_spectrum(self):
        """On n = 801 the three lowest eigenvalues are within 1e-3 of 1/2, 3/2, 5/2."""
        fine = decompose(harmonic_model(), Grid(1, 8.0, 801), 3)
        coarse = decompose(harmonic_model(), Grid(1, 8.0, 201), 3, method="dense")
        for n, exact in enumerate((0.5, 1.5, 2.5)):
            self.assertAlmostEqual(fine.eigenvalues[n], exact, delta=1e-3)
            self.assertAlmostEqual(coarse.eigenvalues[n], fine.eigenvalues[n], delta=1e-2)
        self.assertLess(abs(fine.eigenvalues[0] - 0.5), abs(coarse.eigenvalues[0] - 0.5))

    def test_degenerate_ground_state(self):
        """A double lowest eigenvalue is rejected."""
        grid = Grid(1, 1.0, 8)
        op = DiscreteOperator(grid, np.zeros(8), 0.0, sp.diags([1.0, 1.0, 2.0, 3.0, 4.0, 5.0], format="csr"))
        with self.assertRaises(DegenerateSpectrumError):
            eigs_smallest(op, 3)

    def test_solver_failure_reports_residuals(self):
        """Running out of iterations raises with the best residuals."""
        op = discretize(harmonic_model(), HARMONIC_GRID)
        with self.assertRaises(SolverError) as ctx:
            eigs_smallest(op, 6, method="matrix-free", maxiter=2)
        self.assertIsNotNone(ctx.exception.residuals)

    def test_residual_gate(self):
        """Residuals are judged against tol * max(1, |theta|)."""
        op = discretize(harmonic_model(), HARMONIC_GRID)
        dec = eigs_smallest(op, 3, tol=1e-8, method="dense")
        theta = dec.eigenvalues + dec.shift
        self.assertTrue(np.all(dec.residuals <= 1e-8 * np.maximum(1.0, np.abs(theta))))
        with self.assertRaises(SolverError) as ctx:
            eigs_smallest(op, 3, tol=1e-30, method="dense")
        self.assertEqual(len(ctx.exception.residuals), 3)

    def test_invalid_mode_count(self):
        """At least two modes are needed."""
        with self.assertRaises(ValueError):
            eigs_smallest(discretize(harmonic_model(), HARMONIC_GRID), 1)

    def test_box_stability(self):
        """Enlarging a well-sized box barely moves lambda_0 and lambda_1."""
        result = box_stability(harmonic_model(), Grid(1, 6.0, 151), 2)
        self.assertLess(result["delta_lambda0"], 1e-6)
        self.assertLess(result["delta_lambda1"], 1e-6)
        self.assertAlmostEqual(result["enlarged_radius"], 9.0)


class TestStorage(unittest.TestCase):
    """Test cases for the eigenvector store."""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_save_and_load(self):
        """A stored decomposition reloads with its metadata."""
        path = save_decomposition(OU, self.tmp / "ou")
        self.assertEqual(path.suffix, ".npz")
        loaded = load_decomposition(path)
        self.assertTrue(np.array_equal(loaded.eigenvalues, OU.eigenvalues))
        self.assertEqual(loaded.metadata["model_hash"], ou_model(c=-1.0, kappa=0.3).fingerprint())
        self.assertEqual(loaded.grid, HARMONIC_GRID)
        self.assertAlmostEqual(loaded.shift, OU.shift)

    def test_corrupted_store_rejected(self):
        """Vectors that are no longer orthonormal fail validation on load."""
        broken = replace(OU, phi_tilde=2.0 * OU.phi_tilde)
        path = save_decomposition(broken, self.tmp / "broken.npz")
        with self.assertRaises(InvalidDecompositionError):
            load_decomposition(path)


class TestExpansion(unittest.TestCase):
    """Test cases for heat kernels, the semigroup and the projection."""

    def test_mehler_diagonal(self):
        """p~(1, 0, 0) = (2 pi sinh 1)^(-1/2)."""
        value = heat_kernel(HARMONIC, 1.0, [0.0], [0.0])
        self.assertAlmostEqual(value.p_tilde, (2.0 * math.pi * math.sinh(1.0)) ** -0.5, delta=1e-3)
        self.assertAlmostEqual(value.p, value.p_tilde)
        self.assertLess(value.tail, 1e-6)

    def test_kernel_symmetry_and_time(self):
        """The kernel is symmetric and needs t > 0."""
        a = heat_kernel(HARMONIC, 0.5, [0.4], [-1.2]).p_tilde
        b = heat_kernel(HARMONIC, 0.5, [-1.2], [0.4]).p_tilde
        self.assertAlmostEqual(a, b, places=12)
        with self.assertRaises(ValueError):
            heat_kernel(HARMONIC, 0.0, 0, 0)

    def test_chapman_kolmogorov(self):
        """Integrating p~(s, x, .) p~(t, ., y) gives p~(s + t, x, y)."""
        row_x = heat_kernel_row(HARMONIC, 0.4, [0.3])
        row_y = heat_kernel_row(HARMONIC, 0.6, [-0.5])
        composed = float(np.sum(HARMONIC.weights * row_x * row_y))
        direct = heat_kernel(HARMONIC, 1.0, [0.3], [-0.5]).p_tilde
        self.assertAlmostEqual(composed, direct, places=8)

    def test_trace(self):
        """sum_n e^{-(n + 1/2) t} = 1 / (2 sinh(t / 2))."""
        sums = trace_partial_sums(HARMONIC, 1.0)
        self.assertAlmostEqual(sums[-1], 1.0 / (2.0 * math.sinh(0.5)), delta=1e-3)
        self.assertTrue(np.all(np.diff(sums) > 0))

    def test_semigroup_on_ground_state(self):
        """P_t phi_0 = e^{-lambda_0 t} phi_0."""
        evolved = semigroup_apply(HARMONIC, 2.0, HARMONIC.phi[0])
        self.assertTrue(np.allclose(evolved, math.exp(-2.0 * HARMONIC.eigenvalues[0]) * HARMONIC.phi[0], atol=1e-10))
        with self.assertRaises(ValueError):
            semigroup_apply(HARMONIC, -1.0, HARMONIC.phi[0])

    def test_semigroup_mean_mass(self):
        """P_1 1(0) = (cosh 1)^(-1/2) for the harmonic model."""
        evolved = semigroup_apply(HARMONIC, 1.0, np.ones(HARMONIC_GRID.size))
        self.assertAlmostEqual(evolved[HARMONIC_GRID.nearest_index(0.0)], math.cosh(1.0) ** -0.5, delta=2e-3)

    def test_semigroup_constant_rate(self):
        """With K constant the OU semigroup acts on 1 as e^{-kappa t}."""
        evolved = semigroup_apply(OU, 1.0, np.ones(HARMONIC_GRID.size))
        near = HARMONIC_GRID.radii <= 2.0
        self.assertTrue(np.allclose(evolved[near], math.exp(-0.3), atol=1e-3))

    def test_mu_symmetry(self):
        """<P_t f, g>_mu = <f, P_t g>_mu."""
        x = HARMONIC_GRID.nodes[:, 0]
        f = np.exp(-(x - 1.0) ** 2)
        g = np.exp(-(x + 0.5) ** 2 / 2.0) * (1.0 + x)
        left = HARMONIC.mu_inner(semigroup_apply(HARMONIC, 0.7, f), g)
        right = HARMONIC.mu_inner(f, semigroup_apply(HARMONIC, 0.7, g))
        self.assertAlmostEqual(left, right, places=8)

    def test_projection(self):
        """Pi(1)(0) = sqrt(2); Pi is idempotent and annihilates excited modes."""
        ones = np.ones(HARMONIC_GRID.size)
        limit = project_pi(HARMONIC, ones)
        self.assertAlmostEqual(limit[HARMONIC_GRID.nearest_index(0.0)], math.sqrt(2.0), delta=1e-3)
        self.assertTrue(np.allclose(project_pi(HARMONIC, limit), limit, atol=1e-7))
        self.assertLess(np.max(np.abs(project_pi(HARMONIC, HARMONIC.phi[3]))), 1e-7)
        self.assertAlmostEqual(mu_phi0(HARMONIC), math.sqrt(2.0) * math.pi ** 0.25, delta=1e-3)

    def test_nu_density(self):
        """The QSD density integrates to one."""
        density = nu_density(HARMONIC)
        self.assertAlmostEqual(float(np.sum(HARMONIC.weights * density)), 1.0, places=12)
        self.assertGreaterEqual(density.min(), 0.0)

    def test_envelope(self):
        """Harmonic eigenfunctions stay below C0 e^{lambda T0 / 2} H."""
        result = eigenfunction_envelope_check(HARMONIC, harmonic_model(), BoundParams(), 5)
        self.assertTrue(result.passed)
        self.assertEqual(result.modes, [0, 1, 2, 3, 4, 5])
        self.assertGreaterEqual(result.fitted_t0, 0.0)
        with self.assertRaises(ValueError):
            eigenfunction_envelope_check(HARMONIC, harmonic_model(), BoundParams(), 20)


if __name__ == "__main__":
    unittest.main()
