"""
Ensemble statistics: Hurst exponent regression, fBM covariance fits, exact fBM synthesis,
goodness of fit against the geometric law and the particle-vs-SHE comparison.

Ensembles are arrays of shape (replicas, times).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import stats as sps

from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import DegeneracyError, FitError, ParameterError, SpecError
from zrpflux.engine.ensemble import ensemble_matrix, run_ensemble
from zrpflux.params import ProcessParams
from zrpflux.sampler import TestFunction, spawn_streams
from zrpflux.she import SHEConfig, fbm_covariance, run_she_ensemble


def _as_ensemble(series) -> np.ndarray:
    Y = np.asarray(series, dtype=float)
    if Y.ndim != 2:
        raise ParameterError(f"Ensemble must be (replicas, times), got shape {Y.shape}")
    return Y


@dataclass
class HurstEstimate:
    H: float
    ci: Tuple[float, float]
    slope: float
    replicas: int
    level: float
    flagged: bool = False

    def contains(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]


def _wls_slope(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least-squares slope; y may carry leading batch axes."""
    w = w / w.sum()
    xm = np.dot(w, x)
    ym = (y * w).sum(axis=-1, keepdims=True)
    return ((y - ym) * (w * (x - xm))).sum(axis=-1) / np.dot(w, (x - xm) ** 2)


def hurst_estimate(
    series,
    times: Sequence[float],
    resamples: int = Defaults.BOOTSTRAP_RESAMPLES,
    level: float = 0.95,
    rng: Optional[np.random.Generator] = None,
    min_decades: float = 2.0,
) -> HurstEstimate:
    """
    Regress log Var(Y_t) on log t with weights 1 / (bootstrap variance of log Var(Y_t));
    H = slope / 2, with a percentile CI from the same replica bootstrap.
    """
    Y = _as_ensemble(series)
    t = np.asarray(times, dtype=float)
    if Y.shape[1] != len(t):
        raise ParameterError(f"{Y.shape[1]} series columns but {len(t)} times")
    if np.any(t <= 0):
        raise ParameterError("Times must be positive for a log-log regression")
    if len(t) < 2 or math.log10(t.max() / t.min()) < min_decades - 1e-9:
        raise ParameterError(f"Times must span at least {min_decades} decades")
    R = Y.shape[0]
    if R < 2:
        raise DegeneracyError("Need at least two replicas to estimate a variance")

    var = Y.var(axis=0, ddof=1)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise DegeneracyError(f"Zero variance at times {t[~(var > 0)].tolist()}")

    rng = rng or np.random.default_rng(0)
    log_t = np.log(t)
    boot = np.empty((resamples, len(t)))
    for i in range(resamples):
        idx = rng.integers(R, size=R)
        boot[i] = Y[idx].var(axis=0, ddof=1)
    with np.errstate(divide="ignore"):
        log_boot = np.log(boot)
    finite = np.all(np.isfinite(log_boot), axis=1)
    log_boot = log_boot[finite]
    spread = log_boot.var(axis=0, ddof=1)
    spread = np.where(spread > 0, spread, spread[spread > 0].min() if np.any(spread > 0) else 1.0)
    weights = 1.0 / spread

    slope = float(_wls_slope(log_t, np.log(var), weights))
    slopes = _wls_slope(log_t, log_boot, weights)
    alpha = 0.5 * (1 - level)
    lo, hi = np.quantile(slopes / 2, [alpha, 1 - alpha])
    flagged = R < Defaults.MIN_HURST_REPLICAS
    if flagged:
        logger.warning(f"Hurst estimate from {R} replicas (< {Defaults.MIN_HURST_REPLICAS})")
    return HurstEstimate(slope / 2, (float(lo), float(hi)), slope, R, level, flagged)


@dataclass
class CovarianceFit:
    scale: float
    residual: float
    H: float
    replicas: int
    scale_ci: Tuple[float, float]
    flagged: bool = False


def _fit_scale(C: np.ndarray, K: np.ndarray) -> Tuple[float, float]:
    kk = float(np.sum(K * K))
    scale = float(np.sum(C * K)) / kk
    norm = float(np.linalg.norm(C))
    residual = float(np.linalg.norm(C - scale * K)) / norm if norm > 0 else 0.0
    return scale, residual


def covariance_fit(
    series,
    times: Sequence[float],
    H: float,
    resamples: int = Defaults.BOOTSTRAP_RESAMPLES,
    level: float = 0.95,
    rng: Optional[np.random.Generator] = None,
) -> CovarianceFit:
    """
    Least-squares scale s minimizing ||C - s K_H||_F, with C the empirical covariance
    matrix and K_H the fBM kernel; returns s and ||C - s K_H||_F / ||C||_F.
    """
    Y = _as_ensemble(series)
    t = np.asarray(times, dtype=float)
    if len(np.unique(t)) < 3:
        raise ParameterError("A covariance fit needs at least three distinct times")
    K = fbm_covariance(t[:, None], t[None, :], H)
    if not np.any(K != 0):
        raise FitError("The fBM kernel vanishes at these times; the design is singular")

    R = Y.shape[0]
    C = np.cov(Y, rowvar=False) if R > 1 else np.zeros((len(t), len(t)))
    scale, residual = _fit_scale(C, K)

    if R > 1:
        rng = rng or np.random.default_rng(0)
        scales = np.empty(resamples)
        for i in range(resamples):
            idx = rng.integers(R, size=R)
            scales[i] = _fit_scale(np.cov(Y[idx], rowvar=False), K)[0]
        alpha = 0.5 * (1 - level)
        lo, hi = np.quantile(scales, [alpha, 1 - alpha])
        ci = (float(lo), float(hi))
    else:
        ci = (-math.inf, math.inf)
    flagged = R < Defaults.MIN_FIT_REPLICAS
    if flagged:
        logger.warning(f"Covariance fit from {R} replicas: confidence interval is wide")
    return CovarianceFit(scale, residual, H, R, ci, flagged)


def fbm_paths(
    times: Sequence[float], H: float, replicas: int, rng: np.random.Generator, scale: float = 1.0
) -> np.ndarray:
    """Exact Gaussian samples of scale * fBM_H at the given positive times (dense Cholesky)."""
    t = np.asarray(times, dtype=float)
    if len(t) > Defaults.FBM_MAX_POINTS:
        raise ParameterError(f"At most {Defaults.FBM_MAX_POINTS} time points, got {len(t)}")
    if np.any(t <= 0):
        raise ParameterError("fBM synthesis needs positive times")
    K = fbm_covariance(t[:, None], t[None, :], H, scale)
    chol = scipy.linalg.cholesky(K, lower=True)
    return rng.standard_normal((replicas, len(t))) @ chol.T


def dyadic_times(t0: float, count: int) -> np.ndarray:
    return t0 * 2.0 ** np.arange(count)


def crossover_time(params: ProcessParams) -> float:
    """
    Macroscopic time of the crossover of J_0 from a difference of Poisson counts (Var ~ t) to
    the collective regime (Var ~ sqrt(t)): (1 + rho_n)^2 / 2 microscopic time units.
    """
    return 0.5 * (1.0 + params.rho_n) ** 2 / params.time_scale


def scaling_window(
    params: ProcessParams, count: int = 8, depth: float = Defaults.HURST_WINDOW_DEPTH
) -> np.ndarray:
    """Dyadic times starting `depth` crossover times in, where the sqrt(t) law has settled."""
    return dyadic_times(depth * crossover_time(params), count)


@dataclass
class CoverageReport:
    trials: int
    hits: int
    level: float
    H: float

    @property
    def coverage(self) -> float:
        return self.hits / self.trials


def bootstrap_coverage(
    trials: int,
    times: Sequence[float],
    H: float,
    replicas: int,
    master_seed: int,
    level: float = 0.9,
    resamples: int = Defaults.BOOTSTRAP_RESAMPLES,
) -> CoverageReport:
    """Empirical coverage of the Hurst CI on exact fBM ensembles."""
    hits = 0
    for rng in spawn_streams(master_seed, trials):
        Y = fbm_paths(times, H, replicas, rng)
        est = hurst_estimate(Y, times, resamples=resamples, level=level, rng=rng)
        hits += est.contains(H)
    report = CoverageReport(trials, hits, level, H)
    logger.info(f"Bootstrap coverage {report.coverage:.3f} at nominal level {level}")
    return report


@dataclass
class ChiSquare:
    statistic: float
    p_value: float
    dof: int
    bins: int


def chi_square_geometric(
    samples, lam: float, kmax: int = 60, min_expected: float = 5.0
) -> ChiSquare:
    """
    Pearson test of P(k) = (1 - lam) lam^k on k = 0..kmax-1 plus a pooled tail bin; bins whose
    expected count falls below min_expected are pooled into the tail.
    """
    x = np.asarray(samples, dtype=np.int64).ravel()
    N = len(x)
    if N == 0:
        raise ParameterError("No samples")
    if lam == 0:
        return ChiSquare(0.0, 1.0 if np.all(x == 0) else 0.0, 0, 1)
    k = np.arange(kmax)
    expected = N * (1 - lam) * lam**k
    cut = int(np.argmax(expected < min_expected)) if np.any(expected < min_expected) else kmax
    cut = max(cut, 1)
    counts = np.bincount(np.minimum(x, cut), minlength=cut + 1)[: cut + 1]
    exp = np.append(expected[:cut], N * lam**cut)
    statistic, p_value = sps.chisquare(counts, exp)
    return ChiSquare(float(statistic), float(p_value), cut, cut + 1)


@dataclass
class ComparisonRow:
    observable: str
    t: float
    s: float
    particle: float
    particle_se: float
    she: float
    she_se: float
    neumann: bool

    @property
    def discrepancy(self) -> float:
        if self.particle == 0 and self.she == 0:
            return 0.0
        return abs(self.particle - self.she) / max(abs(self.she), abs(self.particle))

    @property
    def combined_se(self) -> float:
        return math.hypot(self.particle_se, self.she_se)

    def within(self, tolerance: float) -> bool:
        return abs(self.particle - self.she) <= tolerance * abs(self.she) + 2 * self.combined_se


@dataclass
class ComparisonReport:
    rows: List[ComparisonRow] = field(default_factory=list)
    tolerance: float = 0.1

    @property
    def passed(self) -> bool:
        """Only observables inside the theorem's hypotheses (f'(0) = 0) are asserted."""
        return all(r.within(self.tolerance) for r in self.rows if r.neumann)

    @property
    def flagged(self) -> List[str]:
        return sorted({r.observable for r in self.rows if not r.neumann})


def _moment_with_se(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    prod = (a - a.mean()) * (b - b.mean())
    n = len(prod)
    if n < 2:
        return float(prod.mean()) if n else 0.0, math.inf
    return float(prod.sum() / (n - 1)), float(prod.std(ddof=1) / math.sqrt(n))


def compare_ensembles(
    particle: Dict[str, np.ndarray],
    she: Dict[str, np.ndarray],
    times: Sequence[float],
    observables: Dict[str, TestFunction],
    tolerance: float = 0.1,
) -> ComparisonReport:
    """Var(X_t(f)) and Cov(X_t(f), X_s(f)) of two ensembles sampled at the same times."""
    if set(particle) != set(she):
        raise SpecError(
            f"Observables differ: particle {sorted(particle)} vs SHE {sorted(she)}"
        )
    report = ComparisonReport(tolerance=tolerance)
    t = list(times)
    for name in sorted(particle):
        P, S = _as_ensemble(particle[name]), _as_ensemble(she[name])
        neumann = observables[name].neumann_ok
        if not neumann:
            logger.warning(f"{name} has f'(0) != 0: discrepancy is reported, not asserted")
        for i in range(len(t)):
            for j in range(i, len(t)):
                p, p_se = _moment_with_se(P[:, i], P[:, j])
                s, s_se = _moment_with_se(S[:, i], S[:, j])
                report.rows.append(ComparisonRow(name, t[i], t[j], p, p_se, s, s_se, neumann))
    return report


@dataclass
class ParticleRunSpec:
    params: ProcessParams
    observables: List[TestFunction]
    sample_times: List[float]
    replicas: int
    master_seed: int
    workers: int = 1
    max_events: Optional[int] = None


@dataclass
class SHERunSpec:
    config: SHEConfig
    observables: List[TestFunction]
    sample_times: List[float]
    replicas: int
    master_seed: int


def compare_models(
    particle: ParticleRunSpec, she: SHERunSpec, tolerance: float = 0.1
) -> ComparisonReport:
    """Run both ensembles and compare second moments of the registered observables."""
    names_p = sorted(f.name for f in particle.observables)
    names_s = sorted(f.name for f in she.observables)
    if names_p != names_s:
        raise SpecError(f"Observables differ: particle {names_p} vs SHE {names_s}")
    if not np.allclose(particle.sample_times, she.sample_times):
        raise SpecError("Particle and SHE runs must share their sample times")

    trajectories = run_ensemble(
        particle.params,
        particle.sample_times,
        particle.observables,
        particle.master_seed,
        particle.replicas,
        workers=particle.workers,
        max_events=particle.max_events,
    )
    part = {f.name: ensemble_matrix(trajectories, f.name) for f in particle.observables}
    ens = run_she_ensemble(
        she.config, she.observables, she.sample_times, she.master_seed, she.replicas
    )
    obs = {f.name: f for f in particle.observables}
    return compare_ensembles(part, ens.series, particle.sample_times, obs, tolerance)
