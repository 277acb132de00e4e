"""
The current fluctuation field and its martingale decomposition.

All sums over sites are restricted to the support of the test function.
Time integrals come from the engine's exact per-site occupation integrals, so
accumulators are exact for piecewise-constant integrands.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from zrpflux.common.exceptions import MissingAccumulatorError, ParameterError, SupportError
from zrpflux.core import Configuration, CurrentLedger
from zrpflux.engine.trajectory import Trajectory
from zrpflux.params import ProcessParams
from zrpflux.sampler import Mollifier, TestFunction


def check_support(f: TestFunction, params: ProcessParams):
    if f.s_max > params.L / params.n:
        raise SupportError(
            f"Support of {f.name} reaches {f.s_max}, beyond the window image [0, {params.L / params.n}]"
        )


def _reach(f: TestFunction, n: int, L: int) -> int:
    """Last site whose gradient can be nonzero."""
    return min(L, int(math.ceil(n * f.s_max)) + 1)


def discrete_gradient(f: TestFunction, n: int, x):
    """n (f(x/n) - f((x-1)/n))"""
    x = np.asarray(x, dtype=float)
    return n * (f.f(x / n) - f.f((x - 1) / n))


def discrete_laplacian(f: TestFunction, n: int, x):
    """n (grad_{x+1} f - grad_x f)"""
    x = np.asarray(x, dtype=float)
    return n * (discrete_gradient(f, n, x + 1) - discrete_gradient(f, n, x))


def static_term(config0: Configuration, params: ProcessParams, f: TestFunction) -> float:
    n = params.n
    m = _reach(f, n, config0.L)
    x = np.arange(1, m + 1)
    return float(np.dot(config0.eta[:m] - params.rho_n, f.F(x / n))) / n**1.5


def evaluate_field(
    config0: Configuration, ledger: CurrentLedger, params: ProcessParams, f: TestFunction
) -> float:
    """
    X_t^n(f) = n^{-5/2} sum_{x>=0} J(x) f(x/n) + n^{-3/2} sum_{x>=1} (eta_0(x) - rho_n) F(x/n)
    """
    check_support(f, params)
    n = params.n
    m = _reach(f, n, config0.L)
    x = np.arange(0, m + 1)
    current = float(np.dot(ledger.J[: m + 1], f.f(x / n))) / n**2.5
    return current + static_term(config0, params, f)


def observable_accumulators(
    params: ProcessParams, f: TestFunction, G: np.ndarray, E: np.ndarray, micro_time: float
):
    """
    Time integrals for one observable from per-site occupation integrals.

    :param G: int_0^tau 1{eta_s(x) >= 1} ds for sites 0..L+1 (micro time)
    :param E: int_0^tau eta_s(x) ds for sites 0..L+1 (micro time)
    :return: (int sum (g - lambda) grad f ds, int sum (eta - rho) grad f ds, <M(f)>), macro time
    """
    n, L = params.n, params.L
    scale = params.time_scale
    m = _reach(f, n, L)
    x = np.arange(1, m + 1)
    grad = discrete_gradient(f, n, x)
    acc_g = float(np.dot(G[1 : m + 1] - params.lambda_n * micro_time, grad)) / scale
    acc_eta = float(np.dot(E[1 : m + 1] - params.rho_n * micro_time, grad)) / scale

    xb = np.arange(0, min(m, L) + 1)
    fsq = f.f(xb / n) ** 2
    Gb = G.copy()
    Gb[0] = Gb[L + 1] = params.lambda_n * micro_time
    qv = float(np.dot(Gb[xb] + Gb[xb + 1], fsq)) / (n * scale)
    return acc_g, acc_eta, qv


@dataclass
class MartingaleSeries:
    times: np.ndarray
    martingale: np.ndarray
    quadratic_variation: np.ndarray


def _name(f: Union[TestFunction, str]) -> str:
    return f if isinstance(f, str) else f.name


def _require(traj: Trajectory, name: str):
    if name not in traj.observables:
        raise MissingAccumulatorError(
            f"Observable {name} was not registered before the run; "
            f"registered: {sorted(traj.observables)}"
        )
    if traj.params.kernel_mode and not traj.params.jump_kernel.is_nearest_neighbour():
        raise ParameterError(
            "The martingale decomposition is implemented for nearest-neighbour dynamics only"
        )


def martingale_part(traj: Trajectory, f: Union[TestFunction, str]) -> MartingaleSeries:
    """
    M_t^n(f) = X_t^n(f) - X_0^n(f) - n^{1/2} int_0^t sum_{x>=1} (g_s(x) - lambda_n) grad_x f ds
    together with its predictable quadratic variation.
    """
    name = _name(f)
    _require(traj, name)
    n = traj.params.n
    x = traj.series(name)
    x0 = evaluate_field(
        traj.config0, CurrentLedger.zeros(traj.config0.L), traj.params, traj.observables[name]
    )
    acc = np.array([s.acc_g[name] for s in traj.samples])
    qv = np.array([s.qv[name] for s in traj.samples])
    return MartingaleSeries(traj.times, x - x0 - math.sqrt(n) * acc, qv)


def quadratic_variation(traj: Trajectory, f: Union[TestFunction, str]) -> np.ndarray:
    return martingale_part(traj, f).quadratic_variation


def bg_residual(traj: Trajectory, f: Union[TestFunction, str]) -> np.ndarray:
    """n^{1/2} int_0^t sum (g_s - lambda_n - (1+rho_n)^{-2} (eta_s - rho_n)) grad_x f ds"""
    name = _name(f)
    _require(traj, name)
    p = traj.params
    slope = 1.0 / (1.0 + p.rho_n) ** 2
    acc_g = np.array([s.acc_g[name] for s in traj.samples])
    acc_eta = np.array([s.acc_eta[name] for s in traj.samples])
    return math.sqrt(p.n) * (acc_g - slope * acc_eta)


def bg_integrand(config: Configuration, params: ProcessParams, f: TestFunction) -> float:
    """The Boltzmann-Gibbs integrand at a frozen configuration (without the n^{1/2} factor)."""
    n = params.n
    x = np.arange(1, config.L + 1)
    g = (config.eta > 0).astype(float)
    local = g - params.lambda_n - (config.eta - params.rho_n) / (1.0 + params.rho_n) ** 2
    return float(np.dot(local, discrete_gradient(f, n, x)))


@dataclass
class ContinuityDecomposition:
    lhs: float
    initial: float
    laplacian: float
    boundary: float
    right_edge: float

    @property
    def defect(self) -> float:
        return self.lhs - (self.initial + self.laplacian + self.boundary + self.right_edge)


def continuity_decomposition(
    config0: Configuration,
    config: Configuration,
    ledger: CurrentLedger,
    params: ProcessParams,
    f: TestFunction,
) -> ContinuityDecomposition:
    """
    sum_{x>=1} (eta(x) - rho) grad_x f
        = sum_{x>=1} (eta_0(x) - rho) grad_x f + (1/n) sum_{x=1}^{L-1} J(x) lap_x f
          + J(0) grad_1 f - J(L) grad_L f
    """
    n, L = params.n, config.L
    x = np.arange(1, L + 1)
    grad = discrete_gradient(f, n, x)
    lhs = math.fsum((config.eta - params.rho_n) * grad)
    initial = math.fsum((config0.eta - params.rho_n) * grad)
    inner = np.arange(1, L)
    laplacian = math.fsum(ledger.J[1:L] * discrete_laplacian(f, n, inner)) / n
    boundary = float(ledger.J[0] * grad[0])
    right_edge = -float(ledger.J[L] * grad[L - 1])
    return ContinuityDecomposition(lhs, initial, laplacian, boundary, right_edge)


def mollified_current_gap(traj: Trajectory, moll: Union[Mollifier, str]) -> np.ndarray:
    """n^{-3/2} J_t(0) - X_t^n(phi_eps) at every sample time."""
    name = moll if isinstance(moll, str) else moll.as_test_function().name
    if name not in traj.observables:
        raise MissingAccumulatorError(f"Mollifier observable {name} was not registered")
    return traj.j0 / traj.params.n**1.5 - traj.series(name)
