#!/usr/bin/env python3
import math
import unittest

import numpy as np

from src.field_synthesizer import (FieldRealization, LatticeSpec, Synthesizer, TruncationPlan, synthesize_band,
                                   synthesize_full)
from src.lepage_coefficients import CoefficientSource, GaussianCoefficients, LePageCoefficients, sample_stream
from src.psi_kernel import KernelBank, QuadratureSpec
from src.regularity_verifier import (LatticeDomainError, RegularityReport, aggregate_reports, crop_common, delta_B,
                                     delta_n, directional_denominator, directional_scan, infinity_normalizer,
                                     infinity_scan, rate_L, rate_Ltilde, ratio_curves, rectangular_n0,
                                     rectangular_scan, shell_points, translate, verdict)
from src.spectral_density import BuiltinDensity
from tests.conftest import SLOW


class ZeroSource(CoefficientSource):
    """All coefficients vanish."""

    kind = 'zero'

    def block(self, J, K):
        return np.zeros(np.atleast_2d(K).shape[0])


class NormSynthesizer:
    """Stand-in whose low band is ‖t‖_∞ and whose other bands vanish."""

    def __init__(self, d=1, j_abs_max=2):
        self.d = d
        self.plan = TruncationPlan(j_abs_max=j_abs_max)

    def band(self, eta, t, b=None):
        if any(eta):
            return np.zeros(t.shape[0])
        return np.max(np.abs(t), axis=1)


def line_field(fn, T=1.0, levels=4):
    step = T * 2.0 ** -levels
    grid = LatticeSpec([-T], [step], [int(round(2.5 * T / step)) + 1])
    return FieldRealization(grid, fn(grid.axes()[0]), {})


class TestLatticeOperators(unittest.TestCase):
    """Test cases for Θ, Δ^B and 𝚫ⁿ on lattices."""

    def setUp(self):
        """Set up test fixtures."""
        self.values = np.random.default_rng(0).integers(-50, 50, size=(12, 10)).astype(float)

    def test_zero_order_is_identity(self):
        """Test Δ^0 = identity."""
        np.testing.assert_array_equal(delta_B(self.values, (0, 0), (3, 2)), self.values)

    def test_commutes(self):
        """Test that the axis order of Δ^B does not matter on integer lattices."""
        direct = delta_B(self.values, (1, 2), (2, 3))
        swapped = delta_B(delta_B(self.values, (0, 2), (0, 3)), (1, 0), (2, 0))
        np.testing.assert_array_equal(direct, swapped)

    def test_binomial_expansion(self):
        """Test Δ² g = Θ_{2h} g - 2 Θ_h g + g."""
        far, near, base = crop_common(translate(self.values, (4, 0)), translate(self.values, (2, 0)), self.values)
        np.testing.assert_array_equal(delta_B(self.values, (2, 0), (2, 0)), far - 2.0 * near + base)

    def test_rectangular_increment(self):
        """Test 𝚫¹ on a linear function and 𝚫² annihilating it."""
        x, y = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing='ij')
        g = 3.0 * x - y
        np.testing.assert_array_equal(delta_n(g, 1, (2, 2)), np.full((6, 6), 4.0))
        np.testing.assert_array_equal(delta_n(g, 2, (1, 1)), np.zeros((6, 6)))
        np.testing.assert_array_equal(delta_n(np.full((5, 5), 7.0), 1, (1, 2)), np.zeros((4, 3)))

    def test_domain_errors(self):
        """Test negative and oversized shifts."""
        with self.assertRaises(LatticeDomainError):
            delta_B(self.values, (1, 0), (-1, 0))
        with self.assertRaises(LatticeDomainError):
            delta_B(self.values, (2, 0), (6, 0))
        with self.assertRaises(LatticeDomainError):
            translate(self.values, (0, 10))


class TestRates(unittest.TestCase):
    """Test cases for the rate functions."""

    def test_rate_L_gaussian(self):
        """Test L at α = 2 for a > b, a < b and a = b."""
        self.assertEqual(rate_L(2.0, 1.5, 1), 0.0)
        self.assertEqual(rate_L(2.0, 0.5, 1), 0.5)
        self.assertEqual(rate_L(2.0, 1.0, 1), 1.5)

    def test_rate_L_stable(self):
        """Test L below α = 2 with slack δ."""
        self.assertEqual(rate_L(1.5, 2.0, 1, 0.1), 0.0)
        self.assertAlmostEqual(rate_L(1.5, 0.5, 1, 0.1), 1.0 / 1.5 + 0.5 + 0.1)
        self.assertAlmostEqual(rate_L(1.5, 1.0, 1, 0.1), 1.0 / 1.5 + 0.5 + 0.1 + 1.0)
        self.assertAlmostEqual(rate_L(0.5, 0.3, 2, 0.1), 2.1)
        self.assertAlmostEqual(rate_L(0.5, 2.0, 2, 0.0), 3.0)

    def test_rate_Ltilde(self):
        """Test L̃ with and without an integer exponent."""
        self.assertEqual(rate_Ltilde(2.0, 0.5), 0.5)
        self.assertEqual(rate_Ltilde(2.0, 1.0), 1.5)
        self.assertAlmostEqual(rate_Ltilde(1.2, 0.7), 1.0 / 1.2 + 0.5)
        self.assertAlmostEqual(rate_Ltilde(0.8, 2.0, 0.1), 1.25 + 0.1 + 1.0)

    def test_rejects_negative_arguments(self):
        """Test that negative exponents are rejected."""
        with self.assertRaises(ValueError):
            rate_L(1.0, -0.5, 1)
        with self.assertRaises(ValueError):
            rate_Ltilde(1.0, 0.5, -0.1)

    def test_rectangular_n0(self):
        """Test n₀ = 1 - d + Σ⌈a_l⌉."""
        self.assertEqual(rectangular_n0((0.5,)), 1)
        self.assertEqual(rectangular_n0((1.5, 0.5)), 2)
        self.assertEqual(rectangular_n0((1.0, 2.0)), 2)

    def test_denominator_bands(self):
        """Test the band split of the directional denominator."""
        h = [0.25]
        full = directional_denominator(h, (1,), (0.5,), 2.0, 0.1)
        self.assertAlmostEqual(full, 0.25 ** 0.5 * math.log(7.0) ** 0.5)
        smooth = directional_denominator(h, (2,), (0.5,), 2.0, 0.1, eta=(0,))
        self.assertAlmostEqual(smooth, 0.25 ** 2)
        self.assertEqual(directional_denominator(h, (0,), (0.5,), 2.0, 0.1), 1.0)


class TestVerdicts(unittest.TestCase):
    """Test cases for verdicts and aggregation."""

    def test_verdict(self):
        """Test that two consecutive rises above 10% mean divergence."""
        self.assertEqual(verdict([1.0, 1.2, 1.5]), 'diverging')
        self.assertEqual(verdict([1.0, 1.2, 1.2, 1.5]), 'bounded-trend')
        self.assertEqual(verdict([1.0, 1.05, 1.1, 1.15]), 'bounded-trend')
        self.assertEqual(verdict([1.0, None, 1.2, 1.5]), 'diverging')
        self.assertEqual(verdict([]), 'bounded-trend')

    def test_median_and_void(self):
        """Test the per-level median over seeds and void levels."""
        reports = [RegularityReport('directional', [1, 2, 3], [0.5, 0.25, 0.125], [], '', per_seed=[row])
                   for row in ([1.0, None, 3.0], [2.0, None, 5.0], [4.0, None, 4.0])]
        merged = aggregate_reports(reports)
        self.assertEqual(merged.ratios, [2.0, None, 4.0])
        self.assertEqual(merged.void_levels, [2])
        self.assertEqual(len(merged.per_seed), 3)
        x, y = ratio_curves(merged)['ratio']
        np.testing.assert_array_equal(x, [0.5, 0.125])
        np.testing.assert_array_equal(y, [2.0, 4.0])

    def test_aggregate_empty(self):
        """Test that aggregating nothing raises."""
        with self.assertRaises(ValueError):
            aggregate_reports([])

    def test_report_dict(self):
        """Test the serializable report."""
        report = aggregate_reports([RegularityReport('rectangular', [1], [0.5], [0.3], '')])
        data = report.to_dict()
        self.assertEqual(data['table'], [{'level': 1, 'abscissa': 0.5, 'ratio': 0.3}])
        self.assertEqual(data['verdict'], 'bounded-trend')


class TestScans(unittest.TestCase):
    """Test cases for the empirical scans on known functions."""

    def test_lipschitz_line_is_bounded(self):
        """Test that g(t) = t is bounded for a = 1."""
        report = directional_scan(line_field(lambda t: t), (1,), 1.0, (1.0,), 2.0, levels=4)
        self.assertEqual(report.verdict, 'bounded-trend')
        self.assertEqual(report.levels, [1, 2, 3, 4])
        self.assertEqual(report.abscissa, [0.5, 0.25, 0.125, 0.0625])

    def test_cusp_diverges(self):
        """Test that the cusp g(t) = |t|^0.2 diverges for a = 1."""
        report = directional_scan(line_field(lambda t: np.abs(t) ** 0.2), (1,), 1.0, (1.0,), 2.0, levels=4)
        self.assertEqual(report.verdict, 'diverging')

    def test_linearity(self):
        """Test that doubling the field doubles every ratio."""
        field = line_field(lambda t: np.sin(3.0 * t))
        double = FieldRealization(field.grid, 2.0 * field.values, {})
        one = directional_scan(field, (1,), 1.0, (1.0,), 1.5, levels=4)
        two = directional_scan(double, (1,), 1.0, (1.0,), 1.5, levels=4)
        np.testing.assert_allclose(two.ratios, 2.0 * np.array(one.ratios), rtol=1e-14)

    def test_zero_field(self):
        """Test zero ratios when every coefficient vanishes."""
        density = BuiltinDensity(0.5, [1.0], 2.0)
        plan = TruncationPlan(j_abs_max=1, k_radius=4, quad=QuadratureSpec(24))
        synth = Synthesizer(ZeroSource(2.0, 1, 0), density, plan)
        realization = synthesize_band(synth, (0,), LatticeSpec([-1.0], [0.125], [21]))
        report = directional_scan(realization, (1,), 1.0, density.a, 2.0, eta=(0,), levels=3)
        self.assertEqual(report.ratios, [0.0, 0.0, 0.0])

    def test_misaligned_lattice(self):
        """Test that h off the lattice raises."""
        field = FieldRealization(LatticeSpec([-1.0], [0.3], [12]), np.zeros(12), {})
        with self.assertRaises(LatticeDomainError):
            directional_scan(field, (1,), 1.0, (1.0,), 2.0, levels=2)

    def test_coverage(self):
        """Test that a lattice ending at T cannot hold the shifted window."""
        field = FieldRealization(LatticeSpec([-1.0], [0.0625], [33]), np.zeros(33), {})
        with self.assertRaises(LatticeDomainError):
            directional_scan(field, (1,), 1.0, (1.0,), 2.0, levels=4)

    def test_rectangular(self):
        """Test the rectangular scan on a linear plane and the n₀ guard."""
        step = 1.0 / 16.0
        grid = LatticeSpec([-1.0, -1.0], [step, step], [41, 41])
        x, y = np.meshgrid(*grid.axes(), indexing='ij')
        field = FieldRealization(grid, x + 2.0 * y, {})
        report = rectangular_scan(field, 1, 1.0, (0.5, 0.5), 2.0, levels=4)
        self.assertEqual(report.verdict, 'bounded-trend')
        self.assertEqual(report.parameters['n0'], 1)
        with self.assertRaises(ValueError):
            rectangular_scan(field, 1, 1.0, (1.5, 0.5), 2.0, levels=4)

    def test_infinity_shells(self):
        """Test shell geometry, capping and a linear growth with a' = 1."""
        pts = shell_points(4.0, 2, per_side=8)
        norms = np.max(np.abs(pts), axis=1)
        self.assertTrue(np.all((norms > 2.0) & (norms <= 4.0)))

        report = infinity_scan([NormSynthesizer()], 2.0, 1.0, shells=7, shell_cap=2 ** 6)
        self.assertEqual(report.levels, [1, 2, 3, 4])
        self.assertEqual(len(report.warnings), 3)
        expected = [r / infinity_normalizer(r, 2.0, 1.0, 0.1) for r in (2.0, 4.0, 8.0, 16.0)]
        np.testing.assert_allclose(report.ratios, expected)
        self.assertEqual(report.verdict, 'bounded-trend')

    def test_infinity_normalizer(self):
        """Test the smooth-band and full-field normalizers."""
        self.assertEqual(infinity_normalizer(8.0, 0.5, 0.3, 0.1, eta=(1,)), 1.0)
        self.assertAlmostEqual(infinity_normalizer(8.0, 1.5, 0.3, 0.1, b=(1,)), math.sqrt(math.log(11.0)))
        self.assertAlmostEqual(infinity_normalizer(8.0, 2.0, 0.5, 0.1),
                               8.0 ** 0.5 * math.sqrt(math.log(math.log(11.0))))

    @unittest.skipUnless(SLOW, "set STABLEFIELD_SLOW=1 for scans on synthesized fields")
    def test_gaussian_band_scan(self):
        """Test that the low band of a Gaussian field stays bounded at b = 2."""
        density = BuiltinDensity(0.5, [1.0], 2.0)
        plan = TruncationPlan(j_abs_max=4, quad=QuadratureSpec.default(1))
        grid = LatticeSpec([-1.0], [1.0 / 64.0], [193])
        fields = [synthesize_band(Synthesizer(GaussianCoefficients(seed, 1), density, plan), (0,), grid)
                  for seed in range(4)]
        report = directional_scan(fields, (2,), 1.0, density.a, 2.0, eta=(0,), levels=6)
        self.assertEqual(report.verdict, 'bounded-trend')


@unittest.skipUnless(SLOW, "set STABLEFIELD_SLOW=1 for scans on synthesized fields")
class TestDiscrimination(unittest.TestCase):
    """Test that directional scans separate the right normalizer from a wrong one."""

    SEEDS = range(8)

    def scans(self, alpha, source):
        density = BuiltinDensity(0.5, [0.0], alpha)
        plan = TruncationPlan(j_abs_max=6, quad=QuadratureSpec.default(1))
        bank = KernelBank(density, radius=plan.table_radius, quad=plan.quad)
        grid = LatticeSpec([-1.0], [1.0 / 64.0], [161])
        fields = [synthesize_full(Synthesizer(source(seed), density, plan, bank=bank), grid) for seed in self.SEEDS]
        right = directional_scan(fields, (1,), 1.0, density.a, alpha, levels=6)
        wrong = directional_scan(fields, (1,), 1.0, density.a, alpha, levels=6, exponent_shift=0.3)
        return right, wrong

    def test_gaussian(self):
        """Test bounded-trend with a and diverging with a + 0.3 at α = 2."""
        right, wrong = self.scans(2.0, lambda seed: GaussianCoefficients(seed, 1))
        self.assertEqual(right.verdict, 'bounded-trend', msg=str(right.ratios))
        self.assertEqual(wrong.verdict, 'diverging', msg=str(wrong.ratios))

    def test_lepage(self):
        """Test bounded-trend with a and diverging with a + 0.3 at α = 1.2."""
        right, wrong = self.scans(1.2, lambda seed: LePageCoefficients(sample_stream(seed, 1.2)))
        self.assertEqual(right.verdict, 'bounded-trend', msg=str(right.ratios))
        self.assertEqual(wrong.verdict, 'diverging', msg=str(wrong.ratios))


if __name__ == '__main__':
    unittest.main()
