"""
Unit tests for field descriptors, model types and test functions.
"""
import unittest

import numpy as np

from src.models.families import FAMILIES, example13_model, ou_model
from src.models.fields import (
    ConstantField,
    FieldDescriptorError,
    FieldEvaluationError,
    QuadraticField,
    RadialPolynomialField,
    SumField,
    as_points,
    checked,
    field_from_descriptor,
)
from src.models.model_spec import BoundParams, ModelSpec, SimConfig
from src.models.reports import FAIL, INCONCLUSIVE, PASS, ConvergenceReport
from src.models.test_functions import parse_test_function


class TestFields(unittest.TestCase):
    """Test cases for scalar fields and their descriptors."""

    def test_as_points_shapes(self):
        """Scalars, single points and batches are promoted to (n, d)."""
        self.assertEqual(as_points(1.5).shape, (1, 1))
        self.assertEqual(as_points([0.0, 1.0, 2.0], dimension=1).shape, (3, 1))
        self.assertEqual(as_points([0.0, 1.0], dimension=2).shape, (1, 2))
        with self.assertRaises(ValueError):
            as_points([[0.0, 1.0]], dimension=3)

    def test_descriptor_kinds(self):
        """Every descriptor kind builds the matching field."""
        points = np.array([[1.0], [2.0]])
        self.assertTrue(np.allclose(field_from_descriptor({"kind": "constant", "value": 0.3})(points), 0.3))
        quad = field_from_descriptor({"kind": "quadratic", "c": -1.0})
        self.assertTrue(np.allclose(quad(points), [-0.5, -2.0]))
        radial = field_from_descriptor({"kind": "radial", "a": 2.0, "alpha": 2.0, "shift": 0.0})
        self.assertTrue(np.allclose(radial(points), [2.0, 8.0]))
        total = field_from_descriptor(
            {"kind": "sum", "terms": [{"kind": "constant", "value": 1.0}, {"kind": "quadratic", "c": 2.0}], "scale": 0.5}
        )
        self.assertTrue(np.allclose(total(points), [1.0, 2.5]))

    def test_descriptor_errors(self):
        """Unknown kinds, unknown keys and missing parameters are rejected."""
        with self.assertRaises(FieldDescriptorError):
            field_from_descriptor({"kind": "cubic", "c": 1.0})
        with self.assertRaises(FieldDescriptorError):
            field_from_descriptor({"kind": "quadratic", "c": 1.0, "d": 2.0})
        with self.assertRaises(FieldDescriptorError):
            field_from_descriptor({"kind": "radial", "a": 1.0})
        with self.assertRaises(FieldDescriptorError):
            field_from_descriptor([1, 2])

    def test_radial_derivatives_match_finite_differences(self):
        """Gradient and Laplacian of a radial field agree with central differences."""
        field = RadialPolynomialField(1.0, 3.0, shift=1.0)
        x = np.array([[0.7, -0.4]])
        h = 1e-4
        grad = np.zeros(2)
        lap = 0.0
        for i in range(2):
            e = np.zeros((1, 2))
            e[0, i] = h
            plus, minus, mid = field.evaluate(x + e)[0], field.evaluate(x - e)[0], field.evaluate(x)[0]
            grad[i] = (plus - minus) / (2 * h)
            lap += (plus - 2 * mid + minus) / h ** 2
        self.assertTrue(np.allclose(field.gradient(x)[0], grad, atol=1e-6))
        self.assertAlmostEqual(field.laplacian(x)[0], lap, delta=1e-4)

    def test_field_arithmetic(self):
        """Sums and differences of fields evaluate termwise."""
        points = np.array([[2.0]])
        diff = QuadraticField(1.0) - ConstantField(0.5)
        self.assertIsInstance(diff, SumField)
        self.assertAlmostEqual(diff(points)[0], 1.5)
        self.assertTrue((ConstantField(0.0) * 3.0).is_zero)

    def test_checked_reports_point(self):
        """Non-finite values raise and name the offending point."""
        points = np.array([[0.0], [1.0]])
        with self.assertRaises(FieldEvaluationError) as ctx:
            checked(np.array([0.0, np.inf]), "V", points)
        self.assertIn("[1.0]", str(ctx.exception))


class TestModelTypes(unittest.TestCase):
    """Test cases for ModelSpec, BoundParams and SimConfig."""

    def test_reduction_rate(self):
        """K = d - b for the OU family with negative kappa."""
        spec = ou_model(c=-1.0, kappa=-0.4)
        self.assertTrue(np.allclose(spec.K(np.array([[0.0], [3.0]])), -0.4))
        self.assertTrue(spec.rates_nonnegative(np.array([[0.0]])))

    def test_fingerprint_is_stable(self):
        """Equal models give equal fingerprints; different ones differ."""
        self.assertEqual(FAMILIES["harmonic"]().fingerprint(), FAMILIES["harmonic"]().fingerprint())
        self.assertNotEqual(ou_model(kappa=0.3).fingerprint(), ou_model(kappa=0.0).fingerprint())
        rebuilt = ModelSpec.from_descriptors(
            1, {"kind": "quadratic", "c": -1.0}, {"kind": "constant", "value": 0.0},
            {"kind": "constant", "value": 0.3}, name="ou",
        )
        self.assertEqual(rebuilt.fingerprint(), ou_model(kappa=0.3).fingerprint())

    def test_example13_family(self):
        """V and d grow like |x|^alpha and |x|^beta."""
        spec = example13_model(1.0, 2.0)
        x = np.array([[0.0], [3.0]])
        self.assertTrue(np.allclose(spec.V(x), [1.0, np.sqrt(10.0)]))
        self.assertTrue(np.allclose(spec.death_rate(x), [1.0, 10.0]))

    def test_bound_params_validation(self):
        """Invalid envelope parameters are rejected."""
        with self.assertRaises(ValueError):
            BoundParams(c=0.0)
        with self.assertRaises(ValueError):
            BoundParams(r0=0.5)
        with self.assertRaises(ValueError):
            BoundParams(ball_samples=8)
        with self.assertRaises(ValueError):
            BoundParams(branch="other")

    def test_sim_config_steps(self):
        """Times must be multiples of dt."""
        cfg = SimConfig(dt=0.01, t_max=2.0)
        self.assertEqual(cfg.n_steps(), 200)
        self.assertEqual(cfg.n_steps(0.5), 50)
        with self.assertRaises(ValueError):
            cfg.n_steps(0.005)
        with self.assertRaises(ValueError):
            SimConfig(dt=0.5, t_max=0.1)
        with self.assertRaises(ValueError):
            SimConfig(rng_seed=-1)


class TestTestFunctions(unittest.TestCase):
    """Test cases for test-function descriptors."""

    def test_descriptors(self):
        """Known descriptors evaluate as documented."""
        points = np.array([[1.0, 2.0], [0.0, 0.0]])
        self.assertTrue(np.allclose(parse_test_function("one")(points), 1.0))
        self.assertTrue(np.allclose(parse_test_function("x")(points), [1.0, 0.0]))
        self.assertTrue(np.allclose(parse_test_function("x2")(points), [5.0, 0.0]))
        bump = parse_test_function("bump:1,1")
        self.assertAlmostEqual(bump(np.array([[1.0, 1.0]]))[0], 1.0)
        self.assertFalse(parse_test_function("x").bounded)

    def test_invalid_descriptors(self):
        """Unknown descriptors and bad bumps are rejected."""
        for text in ("cosine", "bump:1", "bump:0,-1"):
            with self.assertRaises(ValueError):
                parse_test_function(text)


class TestConvergenceReport(unittest.TestCase):
    """Test cases for report status derivation."""

    def test_status_rules(self):
        """Tolerances, slope bounds and inconclusive reasons decide the status."""
        ok = ConvergenceReport("c", [1.0], [1.0], [1.0], [0.01], [0.1], [True])
        self.assertEqual(ok.status, PASS)
        bad = ConvergenceReport("c", [1.0], [1.0], [1.0], [0.5], [0.1], [True])
        self.assertEqual(bad.status, FAIL)
        slope = ConvergenceReport(
            "c", [1.0], [1.0], [1.0], [0.0], [0.1], [True], fitted_slope=-2.0, slope_bounds=(-1.1, -0.9)
        )
        self.assertEqual(slope.status, FAIL)
        vague = ConvergenceReport("c", [1.0], [1.0], [1.0], [0.5], [0.1], [True], inconclusive_reason="noise")
        self.assertEqual(vague.status, INCONCLUSIVE)

    def test_stored_status_rederived(self):
        """A report rebuilt from its dict re-derives the stored status."""
        report = ConvergenceReport(
            "gap_rate", [1.0, 2.0, 3.0], [0.3, 0.1, 0.04], [0.0] * 3, [0.3, 0.1, 0.04],
            [float("inf")] * 3, [False] * 3, fitted_slope=-1.0, slope_bounds=(-1.1, -0.9),
            monotone_from=0, notes={"mode": np.int64(1)},
        )
        restored = ConvergenceReport.from_dict(report.to_dict())
        self.assertEqual(restored.decide(), report.status)
        self.assertIn('"mode": 1', report.to_json())


if __name__ == "__main__":
    unittest.main()
