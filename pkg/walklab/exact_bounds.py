"""Closed-form constants and bounds for the Kac walk, and the step schedule.

Everything that can overflow is evaluated in log space. Probability-valued
bounds are reported raw and clamped to [0, 1].
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special, stats

from .exceptions import ParameterError, PropertyViolation, ScheduleOverflowError
from .sphere_core import RandomStream, pair_count, sample_uniform_points

logger = logging.getLogger(__name__)

L_LIMIT = 10 ** 18
MC_SAMPLES = 10 ** 6


class SpectralRate(str, enum.Enum):
    """Per-step contraction used by the fourth summand of the TV bound."""

    PAPER_HALF_OVER_N = 'paper-2'       # gap bounded below by 1/(2n)
    PAPER_ONE_OVER_N = 'paper-1overN'   # gap 1/n, as used in the schedule
    EXACT_GAP = 'exact-gap'             # gap (n+2)/(2n(n-1))

    def factor(self, n: int) -> float:
        if self is SpectralRate.PAPER_HALF_OVER_N:
            return 1.0 - 1.0 / (2.0 * n)
        if self is SpectralRate.PAPER_ONE_OVER_N:
            return 1.0 - 1.0 / n
        return 1.0 - spectral_gap(n)


@dataclass(frozen=True)
class Claim1Params:
    C: float
    k: int
    n: int
    xmin: float

    def __post_init__(self):
        if self.C <= 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if self.k < 1 or self.n < 2:
            raise ParameterError(f"need k >= 1 and n >= 2, got k={self.k}, n={self.n}")
        if not 0.0 < self.xmin < 1.0:
            raise ParameterError(f"xmin must lie in (0, 1), got {self.xmin}")


@dataclass(frozen=True)
class EtaBound:
    raw: float
    clamped: float


@dataclass(frozen=True)
class HEpsMass:
    union_bound: float
    paper_bound: float
    mc_estimate: float
    mc_se: float
    gamma_bound: float

    @property
    def paper_bound_holds(self) -> bool:
        return self.union_bound <= self.paper_bound


@dataclass(frozen=True)
class GammaRatio:
    n: int
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs > self.rhs

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


@dataclass(frozen=True)
class TVBoundBreakdown:
    """The four summands of the final TV bound and their sum."""

    coverage: float
    transport: float
    neighbourhood: float
    spectral: float
    spectral_log: float

    @property
    def summands(self) -> dict[str, float]:
        return {
            'coverage': self.coverage,
            'transport': self.transport,
            'neighbourhood': self.neighbourhood,
            'spectral': self.spectral,
        }

    @property
    def total(self) -> float:
        return math.fsum(self.summands.values())


@dataclass(frozen=True)
class BoundSchedule:
    n: int
    delta: float
    k: int
    epsilon: float
    l: int
    rate: SpectralRate
    C: float
    Cprime: float
    breakdown: TVBoundBreakdown
    k_sharp: int
    envelope_cubed: float
    envelope_squared: float
    envelope_abstract: float

    @property
    def total(self) -> int:
        return self.k + self.l

    @property
    def bound_value(self) -> float:
        return self.breakdown.total

    @property
    def within_envelope(self) -> bool:
        return self.total <= self.envelope_cubed

    def as_dict(self) -> dict:
        return {
            'n': self.n,
            'delta': self.delta,
            'k': self.k,
            'epsilon': self.epsilon,
            'l': self.l,
            'total': self.total,
            'rate': self.rate.value,
            'C': self.C,
            'Cprime': self.Cprime,
            'bound_value': self.bound_value,
            'summands': self.breakdown.summands,
            'spectral_log': self.breakdown.spectral_log,
            'k_sharp': self.k_sharp,
            'envelopes': {
                'cubed': self.envelope_cubed,
                'squared': self.envelope_squared,
                'abstract': self.envelope_abstract,
            },
            'within_envelope': self.within_envelope,
        }


def eta_bound(n: int, k: int) -> EtaBound:
    """C(n,2)(1 - 1/C(n,2))^k, the coupon-collector bound on P(A_k^c)."""
    if n < 2 or k < 0:
        raise ParameterError(f"need n >= 2 and k >= 0, got n={n}, k={k}")
    pairs = pair_count(n)
    if pairs == 1:
        raw = 1.0 if k == 0 else 0.0
    else:
        raw = pairs * math.exp(k * math.log1p(-1.0 / pairs))
    return EtaBound(raw=raw, clamped=min(max(raw, 0.0), 1.0))


def exact_eta(n: int, k: int) -> float:
    """Exact P(A_k^c) by inclusion-exclusion over the C(n,2) pairs."""
    pairs = pair_count(n)
    with mpmath.workdps(60):
        total = mpmath.mpf(0)
        for m in range(1, pairs + 1):
            total += (-1) ** (m + 1) * mpmath.binomial(pairs, m) * (1 - mpmath.mpf(m) / pairs) ** k
        return float(total)


def coordinate_marginal_pdf(n: int, t: float) -> float:
    """Density of one coordinate of a uniform point on S^{n-1}."""
    if n < 3:
        raise ParameterError(f"the marginal density formula needs n >= 3, got {n}")
    if abs(t) > 1.0:
        raise ParameterError(f"|t| must be at most 1, got {t}")
    log_c = -special.betaln(0.5, (n - 1) / 2.0)
    if n == 3:
        return math.exp(log_c)
    base = 1.0 - t * t
    if base <= 0.0:
        return 0.0
    return math.exp(log_c + 0.5 * (n - 3) * math.log(base))


def coordinate_marginal_cdf(n: int, t):
    """CDF of one coordinate: (x_1 + 1)/2 is Beta((n-1)/2, (n-1)/2)."""
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    a = (n - 1) / 2.0
    return stats.beta.cdf((np.clip(t, -1.0, 1.0) + 1.0) / 2.0, a, a)


def uniform_mass_H_eps(n: int, epsilon: float, samples: int = MC_SAMPLES, seed: int = 0) -> HEpsMass:
    """U(H_eps) three ways: union bound over coordinates, n^{3/2} eps, Monte Carlo."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 3:
        raise ParameterError(f"n must be at least 3, got {n}")
    slab = float(coordinate_marginal_cdf(n, epsilon) - coordinate_marginal_cdf(n, -epsilon))
    union_bound = n * slab
    paper_bound = n ** 1.5 * epsilon
    # the marginal density peaks at t = 0
    gamma_bound = 2.0 * n * math.exp(-special.betaln(0.5, (n - 1) / 2.0)) * epsilon
    points = sample_uniform_points(n, samples, RandomStream(seed, 1))
    hits = np.abs(points).min(axis=1) < epsilon
    mc = float(hits.mean())
    se = math.sqrt(mc * (1.0 - mc) / samples)
    result = HEpsMass(union_bound=union_bound, paper_bound=paper_bound, mc_estimate=mc, mc_se=se, gamma_bound=gamma_bound)
    if epsilon <= n ** -1.5 and not result.paper_bound_holds:
        logger.warning(f"Union bound {union_bound:.3e} exceeds n^(3/2) eps = {paper_bound:.3e} at n={n}")
    return result


def gamma_ratio_check(n: int) -> GammaRatio:
    """Gamma(n/2)/Gamma((n-1)/2) against sqrt((n-2)/2)."""
    if n < 3:
        raise ParameterError(f"n must be at least 3, got {n}")
    # Gamma(n/2) / Gamma((n-1)/2) = sqrt(pi) / B(1/2, (n-1)/2)
    lhs = math.exp(0.5 * math.log(math.pi) - special.betaln(0.5, (n - 1) / 2.0))
    return GammaRatio(n=n, lhs=lhs, rhs=math.sqrt((n - 2) / 2.0))


def gamma_ratio_sweep(ns) -> tuple[int, GammaRatio | None]:
    """Count violations over ``ns``; also return the tightest case."""
    ns = np.asarray(list(ns), dtype=np.float64)
    lhs = np.exp(0.5 * math.log(math.pi) - special.betaln(0.5, (ns - 1) / 2.0))
    rhs = np.sqrt((ns - 2) / 2.0)
    violations = int(np.sum(lhs <= rhs))
    if ns.size == 0:
        return violations, None
    with np.errstate(divide='ignore'):
        ratio = np.where(rhs > 0, lhs / rhs, np.inf)
    tightest = int(np.argmin(ratio))
    return violations, GammaRatio(n=int(ns[tightest]), lhs=float(lhs[tightest]), rhs=float(rhs[tightest]))


def spectral_gap(n: int) -> float:
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    return (n + 2) / (2.0 * n * (n - 1))


def quadratic_eigenvalue(n: int) -> float:
    """Eigenvalue of the kernel on x_1^2 - 1/n."""
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    return (n - 2) / (n - 1)


def claim1_density_bound(p: Claim1Params) -> float:
    """log of C^k k^{k^2} xmin^{-n} (-ln xmin)^k."""
    minus_log = -math.log(p.xmin)
    if minus_log <= 0.0:
        return -math.inf
    return p.k * math.log(p.C) + p.k * p.k * math.log(p.k) - p.n * math.log(p.xmin) + p.k * math.log(minus_log)


def claim1_product_form(C: float, k: int, coords) -> float:
    """log of |min x_i|^{-n} (sum_i (-ln|x_i|)^k) C^k prod_{m<=k} m!."""
    x = np.abs(np.asarray(coords, dtype=np.float64))
    if C <= 0 or k < 1 or x.size < 2 or np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ParameterError("need C > 0, k >= 1 and every |x_i| in (0, 1)")
    log_factorials = math.fsum(math.lgamma(m + 1) for m in range(1, k + 1))
    log_sum = special.logsumexp(k * np.log(-np.log(x)))
    return -x.size * math.log(x.min()) + float(log_sum) + k * math.log(C) + log_factorials


def truncated_density_level(n: int, epsilon: float) -> tuple[float, float]:
    """Constant density of nu_k on H_eps: exact-constant form and the eps^{-3/4} sqrt(2 pi/(n-2)) bound.

    The exact form is eps^{1/4} / (eps * c_n) with c_n the marginal constant;
    the bound replaces c_n by sqrt((n-2)/(2 pi)).
    """
    if n < 3 or not 0.0 < epsilon < 1.0:
        raise ParameterError(f"need n >= 3 and epsilon in (0, 1), got n={n}, epsilon={epsilon}")
    c_n = math.exp(-special.betaln(0.5, (n - 1) / 2.0))
    exact = epsilon ** 0.25 / (epsilon * c_n)
    bound = epsilon ** -0.75 * math.sqrt(2.0 * math.pi / (n - 2)) if n > 2 else math.inf
    return exact, bound


def l2_distance_bound(n: int, epsilon: float) -> float:
    """log of the 2 eps^{-n} bound on ||nu_k - U||_{L^2}."""
    if not 0.0 < epsilon < 0.5:
        raise ParameterError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    return math.log(2.0) - n * math.log(epsilon)


def first_summand_k(n: int, delta: float) -> int:
    """Smallest k with k > (-log delta + 2 log n) C(n,2)."""
    return math.floor((-math.log(delta) + 2.0 * math.log(n)) * pair_count(n)) + 1


def _spectral_log_prefix(n: int, k: int, epsilon: float, C: float) -> float:
    return k * math.log(C) + k * k * math.log(k) - n * math.log(epsilon) + k * math.log(-math.log(epsilon))


def final_tv_bound(
    n: int,
    k: int,
    l: int,
    epsilon: float,
    C: float = 1.0,
    rate: SpectralRate | str = SpectralRate.PAPER_ONE_OVER_N,
) -> TVBoundBreakdown:
    """Evaluate the four summands of the TV bound after k + l steps."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if k < 1 or l < 1:
        raise ParameterError(f"need k, l >= 1, got k={k}, l={l}")
    if C <= 0:
        raise ParameterError(f"C must be positive, got {C}")
    rate = SpectralRate(rate)
    log4 = _spectral_log_prefix(n, k, epsilon, C) + l * math.log(rate.factor(n))
    return TVBoundBreakdown(
        coverage=eta_bound(n, k).raw,
        transport=n ** 1.5 * epsilon,
        neighbourhood=epsilon ** 0.25,
        spectral=math.exp(log4) if log4 < 0.0 else math.inf,
        spectral_log=log4,
    )


def mixing_bound_schedule(
    n: int,
    delta: float,
    C: float = 1.0,
    Cprime: float = 1.0,
    rate: SpectralRate | str = SpectralRate.PAPER_ONE_OVER_N,
) -> BoundSchedule:
    """Choose (k, eps, l) so that every summand of the TV bound is at most delta.

    l is the exact solution of the log-linear inequality for the fourth
    summand. Raises PropertyViolation if the total exceeds
    Cprime n^5 (ln n)^3 (ln 1/delta)^3 or the bound exceeds 3 delta.
    """
    if n < 3:
        raise ParameterError(f"n must be at least 3, got {n}")
    if not 0.0 < delta < 1.0 / math.e:
        raise ParameterError(f"delta must lie in (0, 1/e), got {delta}")
    rate = SpectralRate(rate)
    log_n, log_inv_delta = math.log(n), math.log(1.0 / delta)

    k = math.ceil(n * n * log_n * log_inv_delta)
    epsilon = delta ** 4 * n ** -1.5 / 4.0
    contraction = -math.log(rate.factor(n))
    needed = _spectral_log_prefix(n, k, epsilon, C) - math.log(delta)
    l_real = needed / contraction
    if not math.isfinite(l_real) or l_real >= L_LIMIT:
        raise ScheduleOverflowError('spectral', f"no l below {L_LIMIT:.0e} makes the fourth summand <= {delta}")
    l = max(1, math.ceil(l_real))
    while final_tv_bound(n, k, l, epsilon, C, rate).spectral > delta:
        l += 1

    breakdown = final_tv_bound(n, k, l, epsilon, C, rate)
    schedule = BoundSchedule(
        n=n,
        delta=delta,
        k=k,
        epsilon=epsilon,
        l=l,
        rate=rate,
        C=C,
        Cprime=Cprime,
        breakdown=breakdown,
        k_sharp=first_summand_k(n, delta),
        envelope_cubed=Cprime * n ** 5 * log_n ** 3 * log_inv_delta ** 3,
        envelope_squared=Cprime * n ** 5 * log_n ** 2 * log_inv_delta ** 2,
        envelope_abstract=n ** 5 * log_n,
    )
    logger.info(f"Schedule n={n} delta={delta}: k={k} l={l} total={schedule.total} bound={schedule.bound_value:.3e}")
    if schedule.bound_value > 3.0 * delta:
        raise PropertyViolation(f"schedule bound {schedule.bound_value:.3e} exceeds 3 delta = {3 * delta:.3e}")
    if not schedule.within_envelope:
        raise PropertyViolation(
            f"total {schedule.total} exceeds C' n^5 (ln n)^3 (ln 1/delta)^3 = {schedule.envelope_cubed:.6e} for C' = {Cprime}"
        )
    return schedule
