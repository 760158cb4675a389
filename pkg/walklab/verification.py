"""Property suites behind ``manage.py verify``.

Each suite returns a SuiteReport with the number of checks, the number of
violations, the worst margin seen (negative when something failed) and the
measured quantities.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import density_lab, exact_bounds
from .exceptions import NoValidWindow, PropertyViolation
from .kac_walk import EnsembleConfig, conditional_snapshot, empirical_eta, run_ensemble
from .mixing_metrics import (
    CoordinateMomentObserver,
    MomentObserver,
    h_eps_mass,
    h_eps_stderr,
    half_space_margins,
    observable_decay,
    wasserstein_estimate,
)
from .sphere_core import RandomStream, pair_count, sample_uniform_points

logger = logging.getLogger(__name__)

SPOT_VALUE = 16.0 / 3.0
ETA_DIMENSIONS = (3, 4, 6)
ETA_STEPS = 200
SCHEDULE_CASES = [(n, delta) for n in (5, 10, 20) for delta in (1e-2, 1e-3)]
SCHEDULE_CPRIME = 10.0
CLAIM2_CASES = [(n, eps) for n in (3, 4) for eps in (0.01, 0.05)]
TRANSPORT_CLOUD = 1024
CAP_RADII = (0.3, 0.6, 1.0, math.pi / 2, 2.5)
CAP_STEPS = 20
RAW_DEFECT_PER_BAND_WIDTH = 0.1
PUSHFORWARD_SAMPLES = 1_000_000
PUSHFORWARD_TV_TOLERANCE = 1e-2
PUSHFORWARD_MAX_Z = 5.0
SANDWICH_TESTS = 20
STATIONARITY_DIMENSIONS = (3, 5, 10)
STATIONARITY_STEPS = 100
STATIONARITY_RECORD_EVERY = 10
DECAY_DIMENSIONS = (3, 4, 6)
DECAY_STEPS_PER_DIMENSION = 8
DECAY_TOLERANCE = 0.02


@dataclass
class SuiteReport:
    name: str
    checks: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    details: dict = field(default_factory=dict)
    duration_seconds: float = 0.0

    def check(self, label, margin):
        """Record one check; ``margin`` < 0 means it failed."""
        self.checks += 1
        self.worst_margin = min(self.worst_margin, margin)
        if margin < 0:
            self.violations += 1
            logger.warning(f"[{self.name}] {label} failed (margin {margin:.3e})")

    @property
    def passed(self):
        return self.violations == 0

    def as_dict(self):
        return {
            'suite': self.name,
            'checks': self.checks,
            'violations': self.violations,
            'passed': self.passed,
            'worst_margin': self.worst_margin,
            'duration_seconds': round(self.duration_seconds, 3),
            'details': self.details,
        }


def lemma3_suite(draws, seed, **kwargs):
    report = SuiteReport('lemma3')
    spot = density_lab.technical_lemma_check(0.25, 0.25, 0.25, 0.25, 1)
    report.check('j=1 spot value', 1e-9 - abs(spot.lhs - SPOT_VALUE))
    report.check('j=1 spot inequality', spot.log_margin)

    sweep = density_lab.lemma3_sweep(draws, seed)
    grid = density_lab.lemma3_grid_sweep()
    for result in (sweep, grid):
        report.checks += result.draws
        report.violations += result.violations
        report.worst_margin = min(report.worst_margin, result.worst_margin)
    report.details = {
        'spot': {'lhs': spot.lhs, 'rhs': spot.rhs},
        'random_draws': sweep.draws,
        'random_violations': sweep.violations,
        'worst_log_margin': sweep.worst_margin,
        'worst_params': list(sweep.worst.params) if sweep.worst else None,
        'grid_draws': grid.draws,
        'grid_violations': grid.violations,
    }
    return report


def lemma1_test_densities():
    vm = density_lab.von_mises_circle_density
    mixture_parts = (vm(0.5, 3.0), vm(2.5, 1.0))
    return {
        'uniform': lambda phi: np.ones_like(np.asarray(phi, dtype=np.float64)),
        'von-mises(0,1)': vm(0.0, 1.0),
        'von-mises(pi/3,2)': vm(math.pi / 3, 2.0),
        'von-mises(pi/2,4)': vm(math.pi / 2, 4.0),
        'mixture': lambda phi: 0.5 * mixture_parts[0](phi) + 0.5 * mixture_parts[1](phi),
    }


def lemma1_suite(grid_cells, seed, samples=PUSHFORWARD_SAMPLES, **kwargs):
    """Pushforward of each test circle density against a sampled rotation of it."""
    report = SuiteReport('lemma1')
    grid = density_lab.SphereGrid.from_cells(grid_cells)
    densities = {}
    for index, (name, h) in enumerate(lemma1_test_densities().items()):
        density = density_lab.circle_average_pushforward(h, grid)
        points = density_lab.sample_circle_pushforward(h, samples, RandomStream(seed, 16 + index))
        agreement = density_lab.band_agreement(density, points)
        report.check(f'{name} band TV', PUSHFORWARD_TV_TOLERANCE - agreement.tv)
        report.check(f'{name} band z-scores', PUSHFORWARD_MAX_Z - agreement.max_z)
        shape = density_lab.pushforward_shape(h, density)
        densities[name] = {
            'band_tv': agreement.tv,
            'band_max_z': agreement.max_z,
            'constant': shape.constant,
            'ratio_to_one_over_two_pi': shape.reference_ratio,
            'shape_deviation': shape.max_deviation,
            'admissible_cells': shape.admissible_cells,
        }
    report.details = {'grid_cells': grid.size, 'bands': grid.n_bands, 'samples': samples, 'densities': densities}
    return report


def grid_suite(grid_cells, seed, **kwargs):
    """Balanced and raw grid operators.

    The balanced operator is doubly stochastic and symmetric by construction;
    its checks guard the balancing. The raw interpolation kernel is held to
    ``RAW_DEFECT_PER_BAND_WIDTH`` times the band width on smooth densities.
    """
    report = SuiteReport('grid')
    grid = density_lab.SphereGrid.from_cells(grid_cells)
    operator = density_lab.kac_grid_operator(grid)
    raw_limit = RAW_DEFECT_PER_BAND_WIDTH * grid.band_width

    stationarity = operator.stationarity_defect()
    raw_stationarity = operator.stationarity_defect(balanced=False)
    report.check('stationarity', 1e-6 - stationarity)
    report.check('raw stationarity', 1e-6 - raw_stationarity)

    generator = RandomStream(seed, 4).generator
    directions = sample_uniform_points(3, 20, RandomStream(seed, 5))
    kappas = generator.uniform(0.5, 4.0, 20)
    smooth = [density_lab.fisher_density(grid, directions[p], kappas[p]).values for p in range(20)]
    adjoint = [operator.self_adjointness_defect(smooth[2 * p], smooth[2 * p + 1]) for p in range(10)]
    raw_adjoint = [operator.self_adjointness_defect(smooth[2 * p], smooth[2 * p + 1], balanced=False) for p in range(10)]
    raw_mass = [operator.raw_mass_defect(values) for values in smooth]
    report.check('self-adjointness', 1e-6 - max(adjoint))
    report.check('raw self-adjointness', raw_limit - max(raw_adjoint))
    report.check('raw mass defect', raw_limit - max(raw_mass))

    traces = {}
    for radius in CAP_RADII:
        cap = density_lab.cap_density(grid, radius)
        try:
            trace = density_lab.sup_density_trace(cap, CAP_STEPS, operator)
        except PropertyViolation as e:
            logger.warning(f"Cap radius {radius}: {e}")
            report.check(f'cap {radius} monotone sup', -1.0)
            continue
        report.check(f'cap {radius} monotone sup', 0.0)
        traces[str(radius)] = {
            'sup': [s for _, s, _ in trace],
            'raw_mass_defect': operator.raw_mass_defect(cap.values),
        }

    balanced_defect = abs(float(grid.weights @ operator.apply(density_lab.cap_density(grid, 0.3).values)) - 1.0)
    report.check('balanced mass conservation', 1e-4 - balanced_defect)

    coarse_bands = max(4, min(16, grid.n_bands // 2))
    refinement = density_lab.mass_defect_refinement(bands=(coarse_bands, 2 * coarse_bands))
    (_, coarse), (_, fine) = refinement
    report.check('refinement shrinks raw mass defect', coarse - fine)

    report.details = {
        'grid_cells': grid.size,
        'stationarity_defect': {'balanced': stationarity, 'raw': raw_stationarity},
        'self_adjointness_defect': {'balanced': max(adjoint), 'raw': max(raw_adjoint)},
        'mass_defect': {'balanced': balanced_defect, 'raw': max(raw_mass)},
        'raw_defect_limit': raw_limit,
        'sinkhorn_iterations': operator.sinkhorn_iterations,
        'cap_traces': traces,
        'refinement': [{'cells': cells, 'raw_mass_defect': defect} for cells, defect in refinement],
    }
    return report


def gamma_suite(max_n=10 ** 6, **kwargs):
    report = SuiteReport('gamma')
    violations, tightest = exact_bounds.gamma_ratio_sweep(range(3, max_n + 1))
    report.checks = max_n - 2
    report.violations = violations
    report.worst_margin = math.log(tightest.ratio)
    report.details = {'n_max': max_n, 'tightest_n': tightest.n, 'tightest_ratio': tightest.ratio}
    return report


def eta_suite(walkers, seed, threads=1, dimensions=ETA_DIMENSIONS, **kwargs):
    """Coverage probabilities against the union bound, plus the half-space sandwich."""
    report = SuiteReport('eta')
    for n in dimensions:
        estimates = empirical_eta(n, ETA_STEPS, walkers, seed, threads=threads)
        worst = math.inf
        for k, eta_hat in estimates:
            bound = exact_bounds.eta_bound(n, k).raw
            exact = exact_bounds.exact_eta(n, k)
            se = math.sqrt(exact * (1.0 - exact) / walkers)
            report.check(f'n={n} k={k} bound', bound + 4.0 * se - eta_hat)
            report.check(f'n={n} k={k} exact', 4.0 * se + 1.0 / walkers - abs(eta_hat - exact))
            worst = min(worst, bound + 4.0 * se - eta_hat)
        values = [eta_hat for _, eta_hat in estimates]
        report.check(f'n={n} monotone', 0.0 if all(b <= a for a, b in zip(values, values[1:])) else -1.0)

        # a step count where both A_k and its complement are well populated
        pairs = pair_count(n)
        k = math.ceil(pairs * (math.log(pairs) + 1.0))
        cfg = EnsembleConfig.from_settings(n=n, walkers=walkers, steps=k, seed=seed, record_every=k, threads=threads)
        snapshot = run_ensemble(cfg, keep_snapshots=True).snapshots[-1]
        margins = half_space_margins(snapshot, SANDWICH_TESTS, seed)
        for index, margin in enumerate(margins):
            report.check(f'n={n} k={k} half-space {index}', margin)
        report.details[f'n={n}'] = {
            'worst_bound_margin': worst,
            'eta_hat_at_max_k': values[-1],
            'sandwich_step': k,
            'sandwich_eta_hat': float(1.0 - snapshot.covered_flags.mean()),
            'worst_sandwich_margin': min(margins),
        }
    return report


def stationarity_suite(walkers, seed, threads=1, dimensions=STATIONARITY_DIMENSIONS, steps=STATIONARITY_STEPS, **kwargs):
    """Every coordinate's mean, second and fourth moment stay at their uniform values from a uniform start."""
    report = SuiteReport('stationarity')
    for n in dimensions:
        cfg = EnsembleConfig.from_settings(
            n=n,
            walkers=walkers,
            steps=steps,
            seed=seed,
            start='uniform',
            record_every=max(1, min(STATIONARITY_RECORD_EVERY, steps)),
            threads=threads,
        )
        curve = run_ensemble(cfg, [CoordinateMomentObserver()])
        worst_z = 0.0
        for step, means in zip(curve.steps, curve.obs_means):
            for name, (mean, se) in means.items():
                gap = abs(mean - CoordinateMomentObserver.stationary(name, n))
                report.check(f'n={n} step={step} {name}', 4.0 * se - gap)
                if se > 0:
                    worst_z = max(worst_z, gap / se)
        report.details[f'n={n}'] = {'recorded_steps': len(curve.steps), 'worst_z': worst_z}
    return report


def decay_suite(walkers, seed, threads=1, dimensions=DECAY_DIMENSIONS, **kwargs):
    """Fitted decay of x_1^2 - 1/n from e1 against log((n-2)/(n-1))."""
    report = SuiteReport('decay')
    for n in dimensions:
        label = f'n={n}'
        cfg = EnsembleConfig.from_settings(
            n=n, walkers=walkers, steps=DECAY_STEPS_PER_DIMENSION * n, seed=seed, record_every=1, threads=threads
        )
        curve = run_ensemble(cfg, [MomentObserver(('x1sq',))])
        expected = math.log(exact_bounds.quadratic_eigenvalue(n))
        try:
            fit = observable_decay(curve, 'x1sq')
        except NoValidWindow as e:
            logger.warning(f"{label}: {e}")
            report.check(f'{label} decay rate', -1.0)
            continue
        error = abs(fit.rate / expected - 1.0)
        report.check(f'{label} decay rate', DECAY_TOLERANCE - error)
        report.details[label] = {
            'rate': fit.rate,
            'expected_rate': expected,
            'relative_error': error,
            'r2': fit.r2,
            'window': [fit.window[0], fit.window[-1]],
            'skip': fit.skip,
        }
    return report


def schedule_suite(**kwargs):
    report = SuiteReport('schedule')
    for n, delta in SCHEDULE_CASES:
        label = f'n={n} delta={delta}'
        try:
            schedule = exact_bounds.mixing_bound_schedule(n, delta, Cprime=SCHEDULE_CPRIME)
        except PropertyViolation as e:
            logger.warning(f"{label}: {e}")
            report.check(label, -1.0)
            continue
        breakdown = exact_bounds.final_tv_bound(n, schedule.k, schedule.l, schedule.epsilon, schedule.C, schedule.rate)
        for summand, value in breakdown.summands.items():
            report.check(f'{label} {summand}', delta - value)
        report.check(f'{label} envelope', schedule.envelope_cubed - schedule.total)
        report.details[label] = schedule.as_dict()
    return report


def claim2_suite(walkers, seed, threads=1, **kwargs):
    """Conditional H_eps mass and the transport distance at k = ceil(n^2 ln n ln 1/eps)."""
    report = SuiteReport('claim2')
    for n, eps in CLAIM2_CASES:
        k = math.ceil(n * n * math.log(n) * math.log(1.0 / eps))
        cfg = EnsembleConfig.from_settings(n=n, walkers=walkers, steps=k, seed=seed, record_every=k, threads=threads)
        curve = run_ensemble(cfg, keep_snapshots=True)
        snapshot = curve.snapshots[-1]
        conditional = conditional_snapshot(snapshot)
        mass = h_eps_mass(conditional, eps)
        se = h_eps_stderr(conditional, eps)
        label = f'n={n} eps={eps}'
        report.check(f'{label} conditional mass', eps ** 0.25 + 4.0 * se - mass)

        reference = sample_uniform_points(n, TRANSPORT_CLOUD, RandomStream(seed, 2 ** 63))
        other = sample_uniform_points(n, TRANSPORT_CLOUD, RandomStream(seed, 2 ** 63 + 1))
        w2 = wasserstein_estimate(snapshot.points[:TRANSPORT_CLOUD], reference).w2
        floor = wasserstein_estimate(other, reference).w2
        report.check(f'{label} transport', eps + 2.0 * floor - w2)
        report.details[label] = {
            'k': k,
            'covered_walkers': conditional.walkers,
            'h_eps_mass': mass,
            'h_eps_se': se,
            'threshold': eps ** 0.25,
            'w2': w2,
            'w2_floor': floor,
        }
    return report


SUITE_RUNNERS = {
    'lemma3': lemma3_suite,
    'lemma1': lemma1_suite,
    'grid': grid_suite,
    'gamma': gamma_suite,
    'eta': eta_suite,
    'schedule': schedule_suite,
    'claim2': claim2_suite,
    'stationarity': stationarity_suite,
    'decay': decay_suite,
}


def run_suites(suite, **params):
    """Run one suite (or all of them) and return their reports in order."""
    names = list(SUITE_RUNNERS) if suite == 'all' else [suite]
    reports = []
    for name in names:
        started = time.perf_counter()
        logger.info(f"Running suite {name}")
        report = SUITE_RUNNERS[name](**params)
        report.duration_seconds = time.perf_counter() - started
        logger.info(f"Suite {name}: {report.checks} checks, {report.violations} violations")
        reports.append(report)
    return reports
