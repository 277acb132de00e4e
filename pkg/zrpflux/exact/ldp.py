"""
Large deviations and moments of block averages of i.i.d. geometric occupations.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from scipy import optimize, stats

from zrpflux.common import logger
from zrpflux.common.exceptions import ParameterError, PrecisionError


def ldp_rate(rho: float, a: float) -> float:
    """
    I_rho(a) = a log(a (1+rho) / (rho (1+a))) - log((1+a)/(1+rho)),
    with 0 log 0 = 0 so that I_rho(0) = log(1 + rho).
    """
    if rho <= 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if a < 0:
        raise ParameterError(f"a must be nonnegative, got {a}")
    if a == 0:
        return math.log1p(rho)
    return a * math.log(a * (1 + rho) / (rho * (1 + a))) - math.log((1 + a) / (1 + rho))


@dataclass(frozen=True)
class RateFunction:
    rho: float

    def __call__(self, a: float) -> float:
        return ldp_rate(self.rho, a)

    def grid(self, points: Iterable[float]) -> np.ndarray:
        return np.array([self(a) for a in points])


def legendre_rate(rho: float, a: float) -> float:
    """
    sup over t < log(1 + 1/rho) of t a - log M_rho(t), log M_rho(t) = -log(1 - rho (e^t - 1)),
    by bounded scalar maximization. Independent of the closed form.
    """
    if rho <= 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if a < 0:
        raise ParameterError(f"a must be nonnegative, got {a}")
    upper = math.log1p(1.0 / rho)

    def negative(t):
        inner = 1.0 - rho * math.expm1(t)
        if inner <= 0:
            return math.inf
        return -(t * a + math.log(inner))

    lower = -60.0
    if a > 0:
        # the maximizer sits at log(a (1+rho) / (rho (1+a))); keep it well inside the bracket
        lower = min(lower, math.log(a * (1 + rho) / (rho * (1 + a))) - 10.0)
    res = optimize.minimize_scalar(
        negative,
        bounds=(lower, upper * (1 - 1e-12)),
        method="bounded",
        options={"xatol": 1e-13, "maxiter": 2000},
    )
    return float(-res.fun)


@dataclass
class LdpLimit:
    b: float
    a: float
    limit: float
    n: Optional[float] = None
    value_at_n: Optional[float] = None
    lower_tail_regime: bool = True

    @property
    def error(self) -> Optional[float]:
        if self.value_at_n is None:
            return None
        return abs(self.value_at_n - self.limit)


def ldp_limit(b: float, a: float, n: Optional[float] = None) -> LdpLimit:
    """
    lim_n I_{rho_n}(a_n) = b/a - log(b/a) - 1 with rho_n = n/b - 1, a_n = n/a - 1.
    :param n: if given, also evaluate I_{rho_n}(a_n) at this n
    """
    if b <= 0 or a <= 0:
        raise ParameterError(f"a and b must be positive, got a={a}, b={b}")
    r = b / a
    out = LdpLimit(b=b, a=a, limit=r - math.log(r) - 1.0, lower_tail_regime=a > b)
    if not out.lower_tail_regime:
        logger.warning(f"a = {a} <= b = {b}: outside the lower-tail regime a > b")
    if n is not None:
        rho_n = n / b - 1.0
        a_n = n / a - 1.0
        if a_n < 0:
            raise ParameterError(f"a_n = n/a - 1 = {a_n} is negative; need n >= a")
        out.n = n
        out.value_at_n = ldp_rate(rho_n, a_n)
    return out


@dataclass
class TailReport:
    n: float
    b: float
    l: int
    a: float
    rho_n: float
    a_n: float
    threshold: int
    probability: float
    rate: float

    @property
    def log_probability_per_site(self) -> float:
        return math.log(self.probability) / self.l

    @property
    def slack(self) -> float:
        """-I(a_n) - (1/l) log P; the bound holds iff this is nonnegative."""
        return -self.rate - self.log_probability_per_site

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-12

    @property
    def vacuous(self) -> bool:
        return self.a_n >= self.rho_n


def block_sum_cdf(lam: float, l: int, m: int) -> float:
    """P(S <= m) for S a sum of l i.i.d. geometric(1 - lam) variables, by pmf convolution."""
    if m < 0:
        return 0.0
    k = np.arange(m + 1)
    pmf = (1.0 - lam) * np.power(lam, k)
    total = np.zeros(m + 1)
    total[0] = 1.0
    for _ in range(l):
        # convolution truncated at m is exact for the values <= m
        total = np.convolve(total, pmf)[: m + 1]
    return float(total.sum())


def tail_bound_check(n: float, b: float, l: int, a: float, max_sites: int = 64) -> TailReport:
    """
    Exact P(block average of l sites <= a_n) against the Chernoff bound exp(-l I_{rho_n}(a_n)).
    """
    if not 1 <= l <= max_sites:
        raise ParameterError(f"l must lie in 1..{max_sites}, got {l}")
    if b <= 0 or n < b:
        raise ParameterError(f"Need 0 < b <= n, got n={n}, b={b}")
    lam = 1.0 - b / n
    rho_n = n / b - 1.0
    a_n = n / a - 1.0
    if a_n < 0:
        raise ParameterError(f"a_n = {a_n} is negative; need n >= a")
    threshold = int(math.floor(l * a_n + 1e-12))
    probability = block_sum_cdf(lam, l, threshold)

    oracle = float(stats.nbinom.cdf(threshold, l, 1.0 - lam))
    if not probability > 0 or not math.isfinite(probability):
        raise PrecisionError(f"Tail probability underflows (P = {probability}) at n={n}, l={l}, a={a}")
    if abs(probability - oracle) > 1e-9 * max(oracle, 1e-300):
        raise PrecisionError(
            f"Convolution and negative-binomial values disagree: {probability} vs {oracle}"
        )

    report = TailReport(n, b, l, a, rho_n, a_n, threshold, probability, ldp_rate(rho_n, a_n))
    if report.vacuous:
        logger.warning(f"a_n = {a_n:.6g} >= rho_n = {rho_n:.6g}: tail bound is vacuous")
    return report


@dataclass
class BlockMoments:
    n: float
    b: float
    l: int
    variance: float
    fourth: float

    @property
    def ratio(self) -> float:
        """l^3 E(X - rho)^4 / n^4"""
        return self.l**3 * self.fourth / self.n**4


def moment_oracle(n: float, b: float, l: int) -> BlockMoments:
    """
    Central moments of the average of l i.i.d. geometric variables of mean rho = n/b - 1,
    from the cumulants kappa_2 = rho(1+rho), kappa_4 = rho(1+rho)(1+6rho+6rho^2).
    """
    if l < 1:
        raise ParameterError(f"l must be positive, got {l}")
    if b <= 0 or n < b:
        raise ParameterError(f"Need 0 < b <= n, got n={n}, b={b}")
    rho = n / b - 1.0
    k2 = rho * (1 + rho)
    k4 = k2 * (1 + 6 * rho + 6 * rho**2)
    variance = k2 / l
    fourth = k4 / l**3 + 3 * variance**2
    return BlockMoments(n, b, l, variance, fourth)


def moment_ratio_table(ns: Iterable[float], ls: Iterable[int], b: float = 1.0) -> List[BlockMoments]:
    ls = list(ls)
    return [moment_oracle(n, b, l) for n in ns for l in ls]


def sample_block_moments(n: float, b: float, l: int, samples: int, rng: np.random.Generator):
    """Monte Carlo variance and fourth central moment of the block average."""
    lam = 1.0 - b / n
    rho = n / b - 1.0
    draws = rng.geometric(1.0 - lam, size=(samples, l)) - 1
    means = draws.mean(axis=1)
    return float(np.mean((means - rho) ** 2)), float(np.mean((means - rho) ** 4))
