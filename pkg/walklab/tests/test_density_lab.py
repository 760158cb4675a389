import math

import numpy as np
from django.conf import settings as django_settings
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.density_lab import (
    GRID_PAIRS,
    GridDensity,
    KacGridOperator,
    band_agreement,
    SphereGrid,
    cap_density,
    circle_average_pushforward,
    fisher_density,
    iterate_density,
    kac_grid_operator,
    kernel_apply_grid,
    lemma3_grid_sweep,
    lemma3_sweep,
    mass_defect_refinement,
    pushforward_shape,
    sample_circle_density,
    sample_circle_pushforward,
    sup_density_trace,
    technical_lemma_check,
    von_mises_circle_density,
)
from walklab.exceptions import GridResolutionError, ParameterError, ResourceAbort
from walklab.sphere_core import RandomStream, rotate_points, sample_uniform_points


def flat(phi):
    return np.ones_like(np.asarray(phi, dtype=np.float64))


class SphereGridTests(SimpleTestCase):

    def test_from_cells(self):
        grid = SphereGrid.from_cells(800)
        self.assertEqual((grid.n_bands, grid.n_sectors), (20, 40))
        self.assertEqual(grid.size, 800)

    def test_equal_area_weights_and_centres(self):
        grid = SphereGrid.with_bands(6)
        self.assertAlmostEqual(grid.weights.sum(), 1.0, places=14)
        np.testing.assert_allclose(np.linalg.norm(grid.centers, axis=1), 1.0, atol=1e-14)
        with self.assertRaises(ValueError):
            grid.centers[0, 0] = 0.0

    def test_interpolation_reproduces_cell_values(self):
        grid = SphereGrid.with_bands(8)
        values = RandomStream(1, 0).generator.random(grid.size)
        np.testing.assert_allclose(grid.interpolate(values, grid.centers), values, atol=1e-9)
        points = sample_uniform_points(3, 500, RandomStream(1, 1))
        _, weight = grid.interpolation(points)
        np.testing.assert_allclose(weight.sum(axis=1), 1.0, atol=1e-14)
        self.assertTrue(np.all(weight >= 0.0))

    def test_off_sphere_point(self):
        with self.assertRaises(GridResolutionError):
            SphereGrid.with_bands(4).interpolation(np.array([[2.0, 0.0, 0.0]]))

    def test_too_coarse(self):
        with self.assertRaises(ParameterError):
            SphereGrid(1, 4)


class GridDensityTests(SimpleTestCase):

    def setUp(self):
        self.grid = SphereGrid.with_bands(4)

    def test_validation(self):
        with self.assertRaises(ParameterError):
            GridDensity(self.grid, np.ones(5))
        with self.assertRaises(ParameterError):
            GridDensity(self.grid, np.full(self.grid.size, 2.0))
        values = np.ones(self.grid.size)
        values[0], values[1] = -1.0, 3.0
        with self.assertRaises(ParameterError):
            GridDensity(self.grid, values)

    def test_normalized(self):
        g = GridDensity.normalized(self.grid, np.arange(self.grid.size, dtype=float))
        self.assertAlmostEqual(g.mass, 1.0, places=12)
        with self.assertRaises(ValueError):
            g.values[0] = 1.0
        with self.assertRaises(ParameterError):
            GridDensity.normalized(self.grid, np.zeros(self.grid.size))

    def test_frame(self):
        frame = GridDensity.uniform(self.grid).to_frame()
        self.assertEqual(list(frame.columns), ['cell', 'x', 'y', 'z', 'weight', 'value'])
        self.assertEqual(len(frame), self.grid.size)


class KacGridOperatorTests(SimpleTestCase):

    def setUp(self):
        self.grid = SphereGrid.with_bands(8)
        self.operator = kac_grid_operator(self.grid)

    def test_balanced_operator_is_doubly_stochastic(self):
        self.assertLessEqual(self.operator.stationarity_defect(), 1e-10)
        matrix = self.operator.balanced
        self.assertLessEqual(abs(matrix - matrix.T).max(), 1e-14)
        self.assertGreaterEqual(matrix.min(), 0.0)

    def test_raw_rows_sum_to_one(self):
        self.assertLessEqual(self.operator.stationarity_defect(balanced=False), 1e-12)

    def test_self_adjoint(self):
        generator = RandomStream(2, 0).generator
        f, g = generator.random(self.grid.size), generator.random(self.grid.size)
        self.assertLessEqual(self.operator.self_adjointness_defect(f, g), 1e-12)

    def test_uniform_is_fixed(self):
        g = kernel_apply_grid(GridDensity.uniform(self.grid), self.operator)
        np.testing.assert_allclose(g.values, 1.0, atol=1e-10)

    def test_entry_budget(self):
        with self.assertRaises(ResourceAbort):
            KacGridOperator(self.grid, max_entries=1000)

    def test_default_budget_admits_production_grid(self):
        grid = SphereGrid.from_cells(100_000)
        self.assertGreaterEqual(grid.size, 100_000)
        self.assertLessEqual(KacGridOperator.stencil_entries(grid), django_settings.KWL_GRID_MAX_ENTRIES)

    def test_raw_kernel_defects_are_small(self):
        limit = 0.1 * self.grid.band_width
        f = fisher_density(self.grid, (0.3, 0.5, 0.8), 2.0).values
        g = fisher_density(self.grid, (-0.6, 0.1, 0.2), 3.0).values
        raw = self.operator.self_adjointness_defect(f, g, balanced=False)
        self.assertGreater(raw, self.operator.self_adjointness_defect(f, g))
        self.assertLess(raw, limit)
        self.assertLess(self.operator.raw_mass_defect(f), limit)

    def test_operator_and_density_grids_must_match(self):
        with self.assertRaises(ParameterError):
            kernel_apply_grid(GridDensity.uniform(SphereGrid.with_bands(4)), self.operator)

    def test_one_step_matches_monte_carlo(self):
        grid = SphereGrid.with_bands(16)
        predicted = kernel_apply_grid(cap_density(grid, math.pi / 2)).band_means()

        samples = 200_000
        points = sample_uniform_points(3, samples, RandomStream(30, 0))
        points[:, 0] = np.abs(points[:, 0])
        generator = RandomStream(30, 1).generator
        pairs = generator.integers(len(GRID_PAIRS), size=samples)
        thetas = generator.random(samples) * 2 * math.pi
        for p, (i, j) in enumerate(GRID_PAIRS):
            chosen = pairs == p
            points[chosen] = rotate_points(points[chosen], i, j, thetas[chosen])
        counts, _ = np.histogram(points[:, 0], bins=grid.band_edges)
        observed = counts / samples * grid.n_bands
        np.testing.assert_allclose(predicted, observed, atol=0.15)


class DensityTraceTests(SimpleTestCase):

    def test_cap_sup_strictly_decreases(self):
        grid = SphereGrid.with_bands(32)
        trace = sup_density_trace(cap_density(grid, 0.3), 12)
        sups = [sup for _, sup, _ in trace]
        self.assertEqual([k for k, _, _ in trace], list(range(13)))
        self.assertTrue(all(b < a for a, b in zip(sups, sups[1:])))
        for _, sup, minimum in trace:
            self.assertGreaterEqual(sup, 1.0)
            self.assertLessEqual(minimum, 1.0)

    def test_whole_sphere_cap_is_flat(self):
        grid = SphereGrid.with_bands(8)
        for _, sup, minimum in sup_density_trace(cap_density(grid, 3.2), 5):
            self.assertAlmostEqual(sup, 1.0, places=10)
            self.assertAlmostEqual(minimum, 1.0, places=10)

    def test_mass_is_preserved(self):
        grid = SphereGrid.with_bands(8)
        for g in iterate_density(fisher_density(grid, (1.0, 0.0, 0.0), 4.0), 10):
            self.assertAlmostEqual(g.mass, 1.0, places=12)
            self.assertLessEqual(abs(g.renormalization - 1.0), 1e-4)

    def test_step_limit(self):
        grid = SphereGrid.with_bands(4)
        with self.assertRaises(ParameterError):
            list(iterate_density(GridDensity.uniform(grid), 201))

    def test_cap_preconditions(self):
        grid = SphereGrid.with_bands(8)
        with self.assertRaises(ParameterError):
            cap_density(grid, 0.0)
        with self.assertRaises(ParameterError):
            cap_density(grid, 0.01)

    def test_raw_mass_defect_shrinks_with_refinement(self):
        (_, coarse), (_, fine) = mass_defect_refinement(bands=(8, 16))
        self.assertLess(fine, coarse)


class PushforwardTests(SimpleTestCase):

    def test_flat_circle_density(self):
        grid = SphereGrid.with_bands(32)
        density = circle_average_pushforward(flat, grid)
        shape = pushforward_shape(flat, density)
        self.assertAlmostEqual(shape.constant, 2 / math.pi, places=8)
        self.assertAlmostEqual(shape.reference_ratio, 4.0, places=7)
        self.assertLess(shape.max_deviation, 1e-8)
        self.assertGreater(shape.admissible_cells, 0)

    def test_flat_circle_density_against_sampling(self):
        grid = SphereGrid.with_bands(16)
        predicted = circle_average_pushforward(flat, grid).band_means()
        samples = 200_000
        x1 = np.cos(RandomStream(40, 0).generator.random(samples) * 2 * math.pi)
        counts, _ = np.histogram(x1, bins=grid.band_edges)
        observed = counts / samples * grid.n_bands
        np.testing.assert_allclose(observed, predicted, rtol=0.08)

    def test_von_mises_shape(self):
        h = von_mises_circle_density(math.pi / 3, 2.0)
        density = circle_average_pushforward(h, SphereGrid.with_bands(64))
        shape = pushforward_shape(h, density)
        self.assertLess(shape.max_deviation, 1e-2)
        self.assertAlmostEqual(shape.constant, 2 / math.pi, delta=1e-2)

    def test_von_mises_against_sampling(self):
        h = von_mises_circle_density(math.pi / 3, 2.0)
        density = circle_average_pushforward(h, SphereGrid.with_bands(16))
        agreement = band_agreement(density, sample_circle_pushforward(h, 200_000, RandomStream(41, 0)))
        self.assertLess(agreement.tv, 1e-2)
        self.assertLess(agreement.max_z, 5.0)

    def test_sampling_detects_the_wrong_density(self):
        density = circle_average_pushforward(flat, SphereGrid.with_bands(16))
        points = sample_circle_pushforward(von_mises_circle_density(0.0, 4.0), 50_000, RandomStream(42, 0))
        agreement = band_agreement(density, points)
        self.assertGreater(agreement.tv, 0.1)
        self.assertGreater(agreement.max_z, 5.0)

    def test_circle_sampler(self):
        phi = sample_circle_density(von_mises_circle_density(1.0, 8.0), 20_000, RandomStream(43, 0))
        self.assertEqual(phi.shape, (20_000,))
        self.assertTrue(np.all(np.abs(phi) <= math.pi))
        self.assertAlmostEqual(float(np.angle(np.exp(1j * phi).mean())), 1.0, delta=0.01)
        points = sample_circle_pushforward(flat, 1000, RandomStream(43, 1))
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, atol=1e-14)

    def test_narrow_bump_concentrates_near_pole(self):
        grid = SphereGrid.with_bands(16)
        density = circle_average_pushforward(von_mises_circle_density(0.0, 50.0), grid)
        self.assertEqual(int(np.argmax(density.band_means())), grid.n_bands - 1)

    def test_preconditions(self):
        grid = SphereGrid.with_bands(8)
        with self.assertRaises(ParameterError):
            circle_average_pushforward(lambda phi: 2.0 * flat(phi), grid)
        with self.assertRaises(ParameterError):
            circle_average_pushforward(flat, grid, plane=(1, 2))
        with self.assertRaises(ParameterError):
            von_mises_circle_density(0.0, -1.0)


class IntegralInequalityTests(SimpleTestCase):

    def test_spot_values(self):
        record = technical_lemma_check(0.5, 0.5, 1.0, 1.0, 1)
        self.assertAlmostEqual(record.lhs, 0.5, places=9)
        self.assertAlmostEqual(record.rhs, 8 * math.log(2), places=9)
        record = technical_lemma_check(0.5, 0.5, 1.0, 1.0, 2)
        self.assertAlmostEqual(record.lhs, math.log(2), places=9)
        self.assertAlmostEqual(record.rhs, 24 * math.log(2) ** 2, places=9)
        self.assertTrue(record.holds)
        self.assertGreater(record.log_margin, 0.0)

    @given(
        st.floats(min_value=1e-4, max_value=0.5),
        st.floats(min_value=1e-4, max_value=0.5),
        st.floats(min_value=1e-4, max_value=1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_first_order_closed_form(self, x1, x2, s):
        record = technical_lemma_check(x1, x2, s, s, 1)
        expected = 1.0 / (s * (x1 + x2 + s))
        self.assertLessEqual(abs(record.lhs - expected), 1e-8 * expected)
        self.assertTrue(record.holds)

    def test_preconditions(self):
        with self.assertRaises(ParameterError):
            technical_lemma_check(0.0, 0.5, 0.5, 0.5, 1)
        with self.assertRaises(ParameterError):
            technical_lemma_check(0.7, 0.5, 0.5, 0.5, 1)
        with self.assertRaises(ParameterError):
            technical_lemma_check(0.3, 0.5, 1.5, 0.5, 1)
        with self.assertRaises(ParameterError):
            technical_lemma_check(0.3, 0.5, 0.5, 0.5, 13)

    def test_random_sweep(self):
        sweep = lemma3_sweep(100, seed=5)
        self.assertEqual(sweep.draws, 100)
        self.assertEqual(sweep.violations, 0)
        self.assertGreater(sweep.worst_margin, 0.0)

    def test_grid_sweep(self):
        sweep = lemma3_grid_sweep(points=6)
        self.assertEqual(sweep.draws, 36)
        self.assertEqual(sweep.violations, 0)
