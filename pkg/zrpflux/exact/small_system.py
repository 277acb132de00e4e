"""
Generators of the zero-range process on closed boxes and the exact quantities built on them:
spectral gaps, the canonical expectation of g(eta(1)), and H_{-1} norms.

Inner products are taken under the uniform measure on Omega_{k,l}: <f, g> = mean(f g).
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import optimize

from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import (
    ParameterError,
    ProjectionError,
    SingularityError,
    SizeError,
)

from .cache import ResultCache
from .graph import StateGraph
from .states import binomial_table, enumerate_states, rank_states


@dataclass
class SmallSystem:
    k: int
    l: int
    states: np.ndarray
    generator: sp.csr_matrix
    _graph: Optional[StateGraph] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def measure(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def dense(self) -> np.ndarray:
        if self.size > Defaults.DENSE_EIGEN_CAP:
            raise SizeError(
                f"{self.size} states exceed the dense cap {Defaults.DENSE_EIGEN_CAP}"
            )
        return self.generator.toarray()

    @property
    def graph(self) -> StateGraph:
        if self._graph is None:
            self._graph = StateGraph.from_generator(self.generator)
        return self._graph

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.mean(np.asarray(f) * np.asarray(g)))

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.generator @ np.asarray(f, dtype=float)

    def dirichlet_form(self, h: np.ndarray) -> float:
        """<h, -L h>"""
        return -self.inner(h, self.apply(h))


def build_small_system(k: int, l: int, cap: int = Defaults.STATE_CAP) -> SmallSystem:
    """
    Generator of nearest-neighbour jumps inside {1..l}, rate 1{eta(x) > 0} per directed edge.
    """
    if k < 0 or l < 1:
        raise ParameterError(f"Need k >= 0 and l >= 1, got k={k}, l={l}")
    states = enumerate_states(k, l, cap)
    size = len(states)
    B = binomial_table(k + l, l)

    rows, cols = [], []
    for x in range(l):
        for y in (x - 1, x + 1):
            if not 0 <= y < l:
                continue
            src = np.flatnonzero(states[:, x] > 0)
            moved = states[src].copy()
            moved[:, x] -= 1
            moved[:, y] += 1
            rows.append(src)
            cols.append(rank_states(moved, k, B))

    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    out_rate = np.bincount(rows, minlength=size).astype(float)
    off = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    generator = (off - sp.diags(out_rate)).tocsr()
    logger.debug(f"Built Omega_{{{k},{l}}}: {size} states, {len(rows)} transitions")
    return SmallSystem(k, l, states, generator)


def generator_symmetry_defect(sys: SmallSystem, f: np.ndarray, g: np.ndarray) -> float:
    """|<f, L g> - <L f, g>| under the uniform measure."""
    return abs(sys.inner(f, sys.apply(g)) - sys.inner(sys.apply(f), g))


def spectral_gap(sys: SmallSystem) -> Optional[float]:
    """Smallest nonzero eigenvalue of -L, None on a one-point state space."""
    if sys.size == 1:
        return None
    evals = scipy.linalg.eigvalsh(-sys.dense())
    return float(evals[1])


@dataclass
class GapRow:
    k: int
    l: int
    states: int
    gap: float

    @property
    def gap_times_klsq(self) -> float:
        return self.gap * (self.k + self.l) ** 2


@dataclass
class GapTable:
    rows: List[GapRow]

    @property
    def kappa0(self) -> float:
        """max over the grid of 1 / (gap (k+l)^2): an empirical certificate, not a proof."""
        return max(1.0 / r.gap_times_klsq for r in self.rows)

    @property
    def all_positive(self) -> bool:
        return all(r.gap > 0 for r in self.rows)


def verify_gap_bound(
    grid: Iterable[Tuple[int, int]], cache: Optional[ResultCache] = None
) -> GapTable:
    rows = []
    for k, l in grid:
        sys = build_small_system(k, l)
        if sys.size == 1:
            continue

        def compute(sys=sys):
            return spectral_gap(sys)

        gap = compute() if cache is None else cache.cached_function_call(("gap", k, l), compute)
        if not gap > 0:
            raise SingularityError(f"Spectral gap of Omega_{{{k},{l}}} is {gap}, not positive")
        rows.append(GapRow(k, l, sys.size, gap))
    table = GapTable(rows)
    if rows:
        logger.info(f"Gap bound on {len(rows)} boxes: empirical kappa_0 = {table.kappa0:.6g}")
    return table


def gap_grid(kmax: int, lmax: int) -> List[Tuple[int, int]]:
    return [(k, l) for k in range(0, kmax + 1) for l in range(1, lmax + 1)]


@dataclass
class PsiValue:
    k: int
    l: int
    formula: float
    enumeration: float

    @property
    def discrepancy(self) -> float:
        return abs(self.formula - self.enumeration)


def psi_formula(k: int, l: int) -> float:
    """1 - 1/(1 + (l/(l-1)) k/l)"""
    density = k / l
    return 1.0 - 1.0 / (1.0 + (l / (l - 1)) * density)


def psi_conditional(k: int, l: int) -> PsiValue:
    """E[1{eta(1) > 0} | sum eta = k] on Omega_{k,l}: closed formula and enumeration."""
    if l < 2:
        raise ParameterError(f"psi needs l >= 2, got l={l}")
    if k < 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    states = enumerate_states(k, l)
    enumeration = float(np.mean(states[:, 0] > 0))
    return PsiValue(k, l, psi_formula(k, l), enumeration)


@dataclass
class HMinusOne:
    poisson: float
    variational: Optional[float] = None

    @property
    def discrepancy(self) -> float:
        if self.variational is None:
            return 0.0
        return abs(self.poisson - self.variational)


def _check_mean_zero(sys: SmallSystem, f: np.ndarray):
    if f.shape != (sys.size,):
        raise ParameterError(f"f must have one value per state ({sys.size}), got shape {f.shape}")
    scale = max(1.0, float(np.max(np.abs(f))) if f.size else 1.0)
    mean = float(np.mean(f))
    if abs(mean) > 1e-10 * scale:
        raise ProjectionError(f"f is not mean-zero under the uniform measure: <f, 1> = {mean}")


def solve_poisson(sys: SmallSystem, f: np.ndarray) -> np.ndarray:
    """The mean-zero solution u of (-L) u = f."""
    f = np.asarray(f, dtype=float)
    _check_mean_zero(sys, f)
    if not sys.graph.connected:
        raise SingularityError(
            f"State space splits into {len(sys.graph.components())} components; -L is not invertible "
            f"on mean-zero functions"
        )
    size = sys.size
    # -L + 11^T/N is positive definite on a connected space and agrees with -L on mean-zero u
    A = -sys.dense() + np.full((size, size), 1.0 / size)
    u = scipy.linalg.solve(A, f, assume_a="pos")
    return u - u.mean()


def variational_h_minus_one(sys: SmallSystem, f: np.ndarray) -> float:
    """sup_h { 2<f, h> - <h, -L h> } by direct numerical maximization."""
    f = np.asarray(f, dtype=float)
    minus_L = -sys.dense()
    size = sys.size

    def objective(h):
        return -(2.0 * np.dot(f, h) - np.dot(h, minus_L @ h)) / size

    def gradient(h):
        return -(2.0 * f - 2.0 * (minus_L @ h)) / size

    res = optimize.minimize(
        objective,
        np.zeros(size),
        jac=gradient,
        method="BFGS",
        options={"gtol": 1e-13, "maxiter": 50 * size + 200},
    )
    return float(-res.fun)


def h_minus_one_norm(sys: SmallSystem, f: np.ndarray, cross_check: bool = True) -> HMinusOne:
    """
    ||f||_{-1}^2 = <f, u> with (-L) u = f, optionally cross-validated by maximizing
    the variational formula.
    """
    f = np.asarray(f, dtype=float)
    u = solve_poisson(sys, f)
    value = HMinusOne(sys.inner(f, u))
    if cross_check:
        value.variational = variational_h_minus_one(sys, f)
    return value
