#!/usr/bin/env python3
import math
import os
import tempfile
import unittest

import numpy as np

from src.psi_kernel import (ACCURACY_CAP, CoverageError, KernelBank, PsiTable, QuadratureSpec, ScaleOverflowError,
                            compute_psi, compute_s_JK, psi_grid, psi_points, verify_localization)
from src.spectral_density import BuiltinDensity
from src.utils.quadrature import band_rule
from src.wavelet_atoms import QuadratureError, WaveletAtom, psi_hat_alpha_JK
from tests.conftest import SLOW


class TestQuadratureSpec(unittest.TestCase):
    """Test cases for the band rule sizing."""

    def test_node_count(self):
        """Test 2n nodes per axis at x = 0 and growth with |x|."""
        spec = QuadratureSpec(32)
        self.assertEqual(len(band_rule(spec.node_count(0.0))[0]), 64)
        self.assertEqual(spec.node_count(10.0), 62)
        self.assertEqual(spec.refined().nodes_per_half_band, 64)

    def test_band_rule_integrates_polynomials(self):
        """Test that the band rule integrates x² exactly over both half-annuli."""
        x, w = band_rule(12, scale=2.0)
        lo, hi = 4.0 * math.pi / 3.0, 16.0 * math.pi / 3.0
        self.assertAlmostEqual(float(np.sum(w * x ** 2)), 2.0 * (hi ** 3 - lo ** 3) / 3.0, places=6)


class TestKernelValues(unittest.TestCase):
    """Test cases for ∂^bΨ_{α,J} evaluations."""

    def setUp(self):
        """Set up test fixtures."""
        self.density = BuiltinDensity(0.5, [0.0], 2.0)
        self.density2 = BuiltinDensity(0.5, [1.0, 1.0], 1.5, a_prime=0.5)

    def test_regression_anchor(self):
        """Test Ψ_{2,0}(0) against a rule with four times the nodes."""
        value = compute_psi((0,), (0,), (0.0,), self.density)
        reference = compute_psi((0,), (0,), (0.0,), self.density, quad=QuadratureSpec(256))
        self.assertAlmostEqual(value.value, reference.value, places=10)
        self.assertLessEqual(value.imag_residual, 1e-8 * (1.0 + abs(value.value)))

    def test_direct_integral(self):
        """Test Ψ_{α,J}(x) against a direct sum with the atom ψ̂_{0,0}."""
        J, x = (1,), 0.75
        nodes, weights = band_rule(400)
        atom = WaveletAtom((0,), (0,), 2.0)
        integrand = np.exp(1j * x * nodes) * self.density.evaluate(np.ldexp(nodes, 1)[:, None]) \
            * psi_hat_alpha_JK(atom, nodes[:, None])
        expected = 2.0 ** (1 / 2.0) * float(np.sum(weights * integrand).real) / (2.0 * math.pi)
        self.assertAlmostEqual(compute_psi(J, (0,), (x,), self.density).value, expected, places=9)

    def test_real_valued(self):
        """Test that imaginary residuals stay below 1e-8 relative."""
        x = np.linspace(-10.0, 10.0, 41)[:, None]
        for b in [(0,), (1,), (2,)]:
            values, residual = psi_points((2,), b, x, self.density)
            self.assertTrue(np.all(residual <= 1e-8 * (1.0 + np.abs(values))), msg="b={}".format(b))

    def test_grid_matches_points(self):
        """Test that psi_grid and psi_points agree on a tensor grid."""
        axis = np.linspace(-3.0, 3.0, 7)
        grid, _ = psi_grid((0, -1), (1, 0), [axis, axis], self.density2)
        mesh = np.stack(np.meshgrid(axis, axis, indexing='ij'), axis=-1).reshape(-1, 2)
        points, _ = psi_points((0, -1), (1, 0), mesh, self.density2)
        np.testing.assert_allclose(grid.reshape(-1), points, rtol=1e-10, atol=1e-13)

    def test_accuracy_cap(self):
        """Test that points beyond the accuracy cap raise."""
        with self.assertRaises(QuadratureError):
            psi_points((0,), (0,), np.array([[ACCURACY_CAP + 1.0]]), self.density)

    def test_scale_overflow(self):
        """Test that a kernel scale beyond the float range names J."""
        density = BuiltinDensity(0.5, [0.0], 0.5)
        with self.assertRaises(ScaleOverflowError) as ctx:
            psi_points((-700,), (0,), np.array([[0.0]]), density)
        self.assertIn('700', str(ctx.exception))


class TestKernelIdentity(unittest.TestCase):
    """Test cases for s_{J,K}(t) = Ψ_J(2^J t - K) - Ψ_J(-K)."""

    def _check(self, density, J, K, t):
        s = compute_s_JK(J, K, t, density)
        x = np.array([np.ldexp(np.asarray(t, dtype=float), np.array(J)) - np.array(K), -np.array(K, dtype=float)])
        values, _ = psi_points(J, (0,) * len(J), x, density, alpha=2.0)
        kernel = values[0] - values[1]
        self.assertLessEqual(abs(s - kernel), 1e-5 * (1.0 + abs(s)), msg="J={} K={} t={}".format(J, K, t))

    def test_unit_shift(self):
        """Test the identity at (J, K, t) = (0, 0, 1)."""
        self._check(BuiltinDensity(0.5, [0.0], 2.0), (0,), (0,), (1.0,))

    def test_t_zero(self):
        """Test s_{J,K}(0) = 0."""
        self.assertEqual(compute_s_JK((1,), (2,), (0.0,), BuiltinDensity(0.5, [0.0], 2.0)), 0.0)

    def test_random_cases(self):
        """Test the identity on random (J, K, t) in one and two dimensions."""
        rng = np.random.default_rng(11)
        densities = {1: BuiltinDensity(0.3, [1.0], 1.2), 2: BuiltinDensity(0.5, [1.0, 0.5], 0.8, a_prime=0.5)}
        for case in range(50 if SLOW else 12):
            d = 1 + case % 2
            J = tuple(int(j) for j in rng.integers(-2, 3, size=d))
            K = tuple(int(k) for k in rng.integers(-4, 5, size=d))
            t = tuple(float(v) for v in rng.uniform(-2.0, 2.0, size=d))
            self._check(densities[d], J, K, t)


class TestPsiTable(unittest.TestCase):
    """Test cases for tabulated kernels."""

    def setUp(self):
        """Set up test fixtures."""
        self.density = BuiltinDensity(0.4, [1.0], 1.5)
        self.table = PsiTable.tabulate((1,), (0,), self.density, radius=4.0)

    def test_interpolation(self):
        """Test spline interpolation against direct evaluation off the nodes."""
        x = np.linspace(-3.9, 3.9, 57)[:, None] + 1.0 / 300.0
        direct, _ = psi_points((1,), (0,), x, self.density)
        np.testing.assert_allclose(self.table.evaluate(x), direct, atol=1e-4 * np.max(np.abs(direct)))

    def test_coverage(self):
        """Test that evaluation outside the table raises CoverageError."""
        self.assertFalse(self.table.covers(np.array([[4.5]])))
        with self.assertRaises(CoverageError):
            self.table.evaluate(np.array([[4.5]]))

    def test_worker_independent(self):
        """Test that tables are bit-identical for any worker count."""
        other = PsiTable.tabulate((1,), (0,), self.density, radius=4.0, workers=4)
        self.assertTrue(np.array_equal(self.table.values, other.values))

    def test_save_and_load(self):
        """Test that a saved table reloads with identical values and metadata."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'psi.hsfg')
            self.table.save(path)
            loaded = PsiTable.load(path)
        self.assertEqual(loaded.J, (1,))
        self.assertEqual(loaded.alpha, 1.5)
        self.assertTrue(np.array_equal(loaded.values, self.table.values))

    def test_bank_caches(self):
        """Test that the bank builds each (J, b) table once."""
        bank = KernelBank(self.density, radius=3.0)
        self.assertIs(bank.table((0,)), bank.table((0,), (0,)))
        self.assertIsNot(bank.table((0,)), bank.table((0,), (1,)))


class TestLocalization(unittest.TestCase):
    """Test cases for verify_localization."""

    def test_low_branch_alpha_two(self):
        """Test decay slope <= -p* + 0.5 and the prefactor on the low-frequency branch."""
        density = BuiltinDensity(0.5, [0.0], 2.0)
        report = verify_localization([(0,), (1,), (2,), (3,)], (0,), 1.0, density, samples=400)
        self.assertEqual(report.branch, 'low')
        self.assertTrue(report.spatial_ok, msg=str(report.spatial_slopes))
        self.assertTrue(report.prefactor_ok, msg="{} vs {}".format(report.prefactor_slopes, report.predicted_slopes))

    def test_band_branch(self):
        """Test that sup |Ψ_{α,j}| decays like 2^{-j a_1} on the band η = (1)."""
        density = BuiltinDensity(0.5, [0.0], 2.0)
        report = verify_localization([(1,), (2,), (3,), (4,)], (0,), 1.0, density, eta=(1,), samples=400)
        self.assertTrue(report.prefactor_ok, msg="{} vs {}".format(report.prefactor_slopes, report.predicted_slopes))
        self.assertAlmostEqual(report.predicted_slopes[0], -density.a[0], places=6)

    def test_rejects_wrong_orthant(self):
        """Test that scales outside the branch are rejected."""
        density = BuiltinDensity(0.5, [1.0], 2.0)
        with self.assertRaises(ValueError):
            verify_localization([(-1,), (0,)], (0,), 1.0, density)
        with self.assertRaises(ValueError):
            verify_localization([(0,), (1,)], (0,), 1.0, density, eta=(1,))

    @unittest.skipUnless(SLOW, "set STABLEFIELD_SLOW=1 for the full localization sweep")
    def test_alpha_sweep(self):
        """Test both branches at α in {0.7, 1.5, 2}."""
        for alpha in (0.7, 1.5, 2.0):
            density = BuiltinDensity(0.5, [0.0], alpha)
            low = verify_localization([(0,), (1,), (2,), (3,)], (0,), 1.0, density)
            band = verify_localization([(1,), (2,), (3,), (4,)], (0,), 1.0, density, eta=(1,))
            self.assertTrue(low.passed, msg="alpha={} {}".format(alpha, low.to_dict()))
            self.assertTrue(band.prefactor_ok, msg="alpha={} {}".format(alpha, band.to_dict()))


if __name__ == '__main__':
    unittest.main()
