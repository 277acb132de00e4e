"""
Finite-volume reference solver for dX = D X'' dt + sqrt(2) dW on [0, domain_len]
with reflecting (Neumann) boundaries, D = b^2 times the kernel diffusivity factor.

Cells are [i h, (i+1) h); values are cell averages, so a field is paired with a test
function as X(f) = sum_i X_i f(x_i) h at the cell centres x_i.
A trailing axis on `values` carries independent replicas.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import ParameterError, ResolutionError
from zrpflux.sampler import Mollifier, TestFunction, spawn_streams

SCHEMES = ("cn", "explicit")
INITIAL_MODES = ("zero", "stationary")


@dataclass
class SHEGrid:
    h: float
    dt: float
    domain_len: float
    values: np.ndarray
    b: float
    t: float = 0.0
    diffusivity_factor: float = 1.0
    scheme: str = "cn"
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.h <= 0 or self.dt <= 0:
            raise ParameterError(f"h and dt must be positive, got h={self.h}, dt={self.dt}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"Unknown scheme '{self.scheme}', expected one of {SCHEMES}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.cells:
            raise ParameterError(
                f"values have {self.values.shape[0]} cells, the grid has {self.cells}"
            )
        self.check_stability(self.dt)

    @property
    def cells(self) -> int:
        return int(round(self.domain_len / self.h))

    @property
    def diffusivity(self) -> float:
        return self.b**2 * self.diffusivity_factor

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.h

    def check_stability(self, dt: float):
        limit = self.h**2 / (2 * self.diffusivity)
        if self.scheme == "explicit" and dt > limit * (1 + 1e-12):
            raise ParameterError(f"Explicit scheme unstable: dt = {dt} > h^2/(2 D) = {limit}")

    def laplacian(self, v: np.ndarray) -> np.ndarray:
        """Neumann Laplacian with ghost cells X_{-1} = X_0 and X_N = X_{N-1}."""
        out = np.empty_like(v)
        out[1:-1] = v[2:] - 2 * v[1:-1] + v[:-2]
        out[0] = v[1] - v[0]
        out[-1] = v[-2] - v[-1]
        return out / self.h**2

    def mass(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.h

    def pair(self, f) -> np.ndarray:
        """X(f) for a TestFunction or any vectorized callable."""
        fn = f.f if isinstance(f, TestFunction) else f
        weights = np.asarray(fn(self.centers), dtype=float) * self.h
        return weights @ self.values


def make_grid(
    b: float,
    h: float,
    dt: float,
    domain_len: float,
    rng: Optional[np.random.Generator] = None,
    replicas: Optional[int] = None,
    init: str = "zero",
    scheme: str = "cn",
    diffusivity_factor: float = 1.0,
    noise_scale: float = 1.0,
) -> SHEGrid:
    """
    :param init: `zero`, or `stationary` for X_0 = -B/b with B a Brownian motion started at 0
    :param replicas: if given, values carry a trailing replica axis of this length
    """
    if init not in INITIAL_MODES:
        raise ParameterError(f"Unknown initial mode '{init}', expected one of {INITIAL_MODES}")
    cells = int(round(domain_len / h))
    if cells < 2:
        raise ParameterError(f"Domain {domain_len} holds fewer than two cells of size {h}")
    shape = (cells,) if replicas is None else (cells, replicas)
    values = np.zeros(shape)
    if init == "stationary":
        if rng is None:
            raise ParameterError("A random stream is required for the stationary initial datum")
        steps = rng.standard_normal(shape) * math.sqrt(h)
        # the first centre sits at h/2
        steps[0] *= math.sqrt(0.5)
        values = -np.cumsum(steps, axis=0) / b
    return SHEGrid(
        h=h,
        dt=dt,
        domain_len=cells * h,
        values=values,
        b=b,
        diffusivity_factor=diffusivity_factor,
        scheme=scheme,
        noise_scale=noise_scale,
    )


def _cn_bands(grid: SHEGrid, dt: float) -> np.ndarray:
    r = 0.5 * dt * grid.diffusivity / grid.h**2
    n = grid.cells
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1 + 2 * r
    ab[1, 0] = ab[1, -1] = 1 + r
    return ab


def she_step(grid: SHEGrid, rng: np.random.Generator, dt: Optional[float] = None) -> SHEGrid:
    """
    One step: Crank-Nicolson on the Laplacian with explicit noise, or Euler-Maruyama.
    The noise increment per cell is sqrt(2 dt / h) xi_i.
    """
    dt = grid.dt if dt is None else dt
    grid.check_stability(dt)
    v = grid.values
    if grid.noise_scale:
        noise = grid.noise_scale * math.sqrt(2 * dt / grid.h) * rng.standard_normal(v.shape)
    else:
        noise = 0.0

    if grid.scheme == "explicit":
        grid.values = v + dt * grid.diffusivity * grid.laplacian(v) + noise
    else:
        rhs = v + 0.5 * dt * grid.diffusivity * grid.laplacian(v) + noise
        grid.values = solve_banded((1, 1), _cn_bands(grid, dt), rhs)
    grid.t += dt
    return grid


def advance(grid: SHEGrid, t: float, rng: np.random.Generator) -> SHEGrid:
    """Step up to time t, shortening the last step to land on t exactly."""
    while t - grid.t > 1e-12 * max(1.0, t):
        she_step(grid, rng, dt=min(grid.dt, t - grid.t))
    return grid


def check_resolution(grid_h: float, moll: Mollifier):
    if moll.epsilon < 2 * grid_h:
        raise ResolutionError(
            f"Mollifier width {moll.epsilon} is not resolved by the grid (need >= 2h = {2 * grid_h})"
        )


@dataclass
class SHETrajectory:
    """Snapshots of a grid, shape (times, cells[, replicas])."""

    times: np.ndarray
    h: float
    snapshots: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.snapshots.shape[1]) + 0.5) * self.h


def record_trajectory(grid: SHEGrid, times: Sequence[float], rng: np.random.Generator) -> SHETrajectory:
    snaps = []
    for t in times:
        advance(grid, t, rng)
        snaps.append(grid.values.copy())
    return SHETrajectory(np.asarray(times, dtype=float), grid.h, np.array(snaps))


def boundary_field(traj: SHETrajectory, moll: Mollifier) -> np.ndarray:
    """X_t(phi_eps) at every recorded time (and replica)."""
    check_resolution(traj.h, moll)
    weights = moll.phi(traj.centers) * traj.h
    return np.tensordot(weights, traj.snapshots, axes=([0], [1]))


def fbm_covariance(t, s, H: float, scale: float = 1.0):
    """scale (t^{2H} + s^{2H} - |t - s|^{2H}) / 2"""
    if not 0 < H < 1:
        raise ParameterError(f"Hurst index must lie in (0, 1), got {H}")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ParameterError("Times must be nonnegative")
    out = scale * 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


@dataclass
class SHEConfig:
    b: float
    h: float
    dt: float
    domain_len: Optional[float] = None
    scheme: str = "cn"
    init: str = "zero"
    diffusivity_factor: float = 1.0
    batch: int = 64

    def resolve_domain(self, horizon: float, support: float) -> float:
        if self.domain_len is not None:
            return self.domain_len
        return Defaults.SHE_SPREAD_FACTOR * self.b * math.sqrt(horizon) + support


@dataclass
class SHEEnsemble:
    times: np.ndarray
    series: Dict[str, np.ndarray] = field(default_factory=dict)
    boundary: Dict[str, np.ndarray] = field(default_factory=dict)
    replicas: int = 0


def run_she_ensemble(
    config: SHEConfig,
    observables: Sequence[TestFunction],
    sample_times: Sequence[float],
    master_seed: int,
    replicas: int,
    mollifiers: Sequence[Mollifier] = (),
) -> SHEEnsemble:
    """
    Replicas are solved in fixed-size batches; batch j draws from the stream of
    (master_seed, j), so growing the replica count by whole batches keeps earlier replicas.
    Returns per observable a (replicas, times) array of X_t(f) and per mollifier X_t(phi_eps).
    """
    times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ParameterError("sample_times must be nonnegative and increasing")
    horizon = float(times[-1]) if len(times) else 0.0
    support = max([f.s_max for f in observables] + [m.epsilon for m in mollifiers] + [0.0])
    domain = config.resolve_domain(horizon, support)
    for m in mollifiers:
        check_resolution(config.h, m)

    batches = math.ceil(replicas / config.batch)
    series: Dict[str, List[np.ndarray]] = {f.name: [] for f in observables}
    boundary: Dict[str, List[np.ndarray]] = {_moll_name(m): [] for m in mollifiers}
    for j, rng in enumerate(spawn_streams(master_seed, batches)):
        size = min(config.batch, replicas - j * config.batch)
        grid = make_grid(
            config.b,
            config.h,
            config.dt,
            domain,
            rng=rng,
            replicas=size,
            init=config.init,
            scheme=config.scheme,
            diffusivity_factor=config.diffusivity_factor,
        )
        out = {name: np.zeros((len(times), size)) for name in series}
        bout = {name: np.zeros((len(times), size)) for name in boundary}
        for i, t in enumerate(times):
            advance(grid, t, rng)
            for f in observables:
                out[f.name][i] = grid.pair(f)
            for m in mollifiers:
                bout[_moll_name(m)][i] = grid.pair(m.phi)
        for name in series:
            series[name].append(out[name].T)
        for name in boundary:
            boundary[name].append(bout[name].T)
        logger.debug(f"SHE batch {j + 1}/{batches} done ({size} replicas)")

    logger.info(
        f"SHE ensemble: {replicas} replicas, {int(round(domain / config.h))} cells, "
        f"scheme {config.scheme}, init {config.init}"
    )
    return SHEEnsemble(
        times=times,
        series={k: np.vstack(v) for k, v in series.items()},
        boundary={k: np.vstack(v) for k, v in boundary.items()},
        replicas=replicas,
    )


def _moll_name(m: Mollifier) -> str:
    return m.as_test_function().name
