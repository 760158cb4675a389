import math

from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from walklab import exact_bounds
from walklab.exact_bounds import Claim1Params, SpectralRate
from walklab.exceptions import ParameterError, PropertyViolation


class CoverageBoundTests(SimpleTestCase):

    def test_eta_bound_values(self):
        bound = exact_bounds.eta_bound(3, 0)
        self.assertEqual(bound.raw, 3.0)
        self.assertEqual(bound.clamped, 1.0)
        self.assertAlmostEqual(exact_bounds.eta_bound(4, 10).raw, 6 * (5 / 6) ** 10, places=14)

    def test_eta_bound_two_dimensions(self):
        self.assertEqual(exact_bounds.eta_bound(2, 0).raw, 1.0)
        self.assertEqual(exact_bounds.eta_bound(2, 3).raw, 0.0)

    def test_exact_eta_three_pairs(self):
        for k in (0, 1, 2, 5, 20):
            expected = 3 * (2 / 3) ** k - 3 * (1 / 3) ** k + (1 if k == 0 else 0)
            self.assertAlmostEqual(exact_bounds.exact_eta(3, k), expected, places=12)

    @given(st.integers(min_value=3, max_value=7), st.integers(min_value=0, max_value=300))
    @settings(max_examples=100, deadline=None)
    def test_exact_eta_below_union_bound(self, n, k):
        self.assertLessEqual(exact_bounds.exact_eta(n, k), exact_bounds.eta_bound(n, k).raw + 1e-15)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            exact_bounds.eta_bound(1, 3)
        with self.assertRaises(ParameterError):
            exact_bounds.eta_bound(3, -1)


class MarginalTests(SimpleTestCase):

    def test_pdf_integrates_to_one(self):
        for n in range(3, 9):
            total, _ = quad(lambda t: exact_bounds.coordinate_marginal_pdf(n, t), -1, 1)
            self.assertAlmostEqual(total, 1.0, places=8)

    def test_pdf_is_flat_in_three_dimensions(self):
        self.assertAlmostEqual(exact_bounds.coordinate_marginal_pdf(3, 0.4), 0.5, places=14)

    def test_cdf_matches_pdf(self):
        for n in (3, 5, 10):
            for t in (-0.7, 0.0, 0.35, 0.9):
                integral, _ = quad(lambda s: exact_bounds.coordinate_marginal_pdf(n, s), -1, t)
                self.assertAlmostEqual(float(exact_bounds.coordinate_marginal_cdf(n, t)), integral, places=8)

    def test_pdf_preconditions(self):
        with self.assertRaises(ParameterError):
            exact_bounds.coordinate_marginal_pdf(2, 0.1)
        with self.assertRaises(ParameterError):
            exact_bounds.coordinate_marginal_pdf(4, 1.5)

    def test_uniform_mass_of_h_eps(self):
        n, eps = 10, 1e-3
        mass = exact_bounds.uniform_mass_H_eps(n, eps, samples=100_000, seed=4)
        self.assertTrue(mass.paper_bound_holds)
        self.assertAlmostEqual(mass.paper_bound, n ** 1.5 * eps, places=15)
        self.assertLessEqual(mass.mc_estimate, mass.union_bound + 4 * mass.mc_se + 1e-5)
        self.assertLessEqual(mass.union_bound, mass.gamma_bound)

    def test_truncated_density_level(self):
        exact, bound = exact_bounds.truncated_density_level(6, 1e-3)
        self.assertLess(exact, bound)

    def test_l2_distance_bound(self):
        self.assertAlmostEqual(exact_bounds.l2_distance_bound(4, 0.1), math.log(2) + 4 * math.log(10), places=12)


class GammaRatioTests(SimpleTestCase):

    def test_three_dimensions(self):
        check = exact_bounds.gamma_ratio_check(3)
        self.assertAlmostEqual(check.lhs, math.sqrt(math.pi) / 2, places=14)
        self.assertAlmostEqual(check.rhs, math.sqrt(0.5), places=14)
        self.assertTrue(check.holds)

    @given(st.integers(min_value=3, max_value=10 ** 6))
    @settings(max_examples=300, deadline=None)
    def test_inequality_holds(self, n):
        self.assertTrue(exact_bounds.gamma_ratio_check(n).holds)

    def test_sweep_has_no_violations(self):
        violations, tightest = exact_bounds.gamma_ratio_sweep(range(3, 10 ** 4 + 1))
        self.assertEqual(violations, 0)
        self.assertEqual(tightest.n, 10 ** 4)
        self.assertGreater(tightest.ratio, 1.0)


class SpectralTests(SimpleTestCase):

    def test_gap_and_eigenvalue(self):
        self.assertAlmostEqual(exact_bounds.spectral_gap(3), 5 / 12, places=15)
        self.assertAlmostEqual(exact_bounds.quadratic_eigenvalue(3), 0.5, places=15)
        self.assertAlmostEqual(exact_bounds.quadratic_eigenvalue(6), 0.8, places=15)

    def test_rate_factors(self):
        self.assertAlmostEqual(SpectralRate('paper-2').factor(10), 0.95, places=15)
        self.assertAlmostEqual(SpectralRate('paper-1overN').factor(10), 0.9, places=15)
        self.assertAlmostEqual(SpectralRate('exact-gap').factor(10), 1 - 12 / 180, places=15)


class DensityBoundTests(SimpleTestCase):

    def test_matches_direct_evaluation(self):
        p = Claim1Params(C=1.5, k=2, n=3, xmin=0.1)
        direct = 1.5 ** 2 * 2 ** 4 * 0.1 ** -3 * (-math.log(0.1)) ** 2
        self.assertAlmostEqual(exact_bounds.claim1_density_bound(p), math.log(direct), places=10)

    def test_large_k_is_finite(self):
        value = exact_bounds.claim1_density_bound(Claim1Params(C=2.0, k=40, n=20, xmin=1e-8))
        self.assertTrue(math.isfinite(value))
        self.assertGreater(value, 700)

    def test_invalid_params(self):
        with self.assertRaises(ParameterError):
            Claim1Params(C=1.0, k=2, n=3, xmin=1.0)
        with self.assertRaises(ParameterError):
            Claim1Params(C=0.0, k=2, n=3, xmin=0.5)

    def test_product_form(self):
        coords = [0.5, 0.6, math.sqrt(1 - 0.25 - 0.36)]
        value = exact_bounds.claim1_product_form(1.0, 2, coords)
        direct = 0.5 ** -3 * sum((-math.log(x)) ** 2 for x in coords) * 1 * 2
        self.assertAlmostEqual(value, math.log(direct), places=10)


class ScheduleTests(SimpleTestCase):

    def test_reference_schedule(self):
        schedule = exact_bounds.mixing_bound_schedule(10, 0.01)
        self.assertEqual(schedule.k, 1061)
        self.assertAlmostEqual(schedule.epsilon, 0.01 ** 4 * 10 ** -1.5 / 4, places=20)
        self.assertEqual(schedule.total, schedule.k + schedule.l)
        self.assertLessEqual(schedule.bound_value, 0.03)
        self.assertTrue(schedule.within_envelope)

    def test_l_is_minimal(self):
        schedule = exact_bounds.mixing_bound_schedule(5, 0.01)
        shorter = exact_bounds.final_tv_bound(5, schedule.k, schedule.l - 1, schedule.epsilon)
        self.assertGreater(shorter.spectral, 0.01)

    def test_every_summand_below_delta(self):
        for n in (5, 10, 20):
            for delta in (1e-2, 1e-3):
                schedule = exact_bounds.mixing_bound_schedule(n, delta, Cprime=10.0)
                recheck = exact_bounds.final_tv_bound(n, schedule.k, schedule.l, schedule.epsilon)
                for name, value in recheck.summands.items():
                    self.assertLessEqual(value, delta, msg=f'{name} at n={n}, delta={delta}')
                self.assertLessEqual(schedule.total, 10.0 * n ** 5 * math.log(n) ** 3 * math.log(1 / delta) ** 3)

    def test_envelope_violation(self):
        with self.assertRaises(PropertyViolation):
            exact_bounds.mixing_bound_schedule(10, 0.01, Cprime=1e-3)

    def test_preconditions(self):
        with self.assertRaises(ParameterError):
            exact_bounds.mixing_bound_schedule(10, 0.3)
        with self.assertRaises(ParameterError):
            exact_bounds.mixing_bound_schedule(2, 0.01)

    def test_spectral_summand_overflows_to_infinity(self):
        breakdown = exact_bounds.final_tv_bound(10, 1061, 1, 1e-6)
        self.assertEqual(breakdown.spectral, math.inf)
        self.assertGreater(breakdown.spectral_log, 0)
        self.assertEqual(breakdown.total, math.inf)

    def test_first_summand_k(self):
        n, delta = 10, 0.01
        k = exact_bounds.first_summand_k(n, delta)
        self.assertGreater(k, (-math.log(delta) + 2 * math.log(n)) * 45)
        self.assertLessEqual(exact_bounds.eta_bound(n, k).raw, delta)
