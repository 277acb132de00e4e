import math
from typing import Callable, List, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from zrpflux.common import Defaults
from zrpflux.common.exceptions import ParameterError
from zrpflux.core import Configuration
from zrpflux.params import ProcessParams

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)


def spawn_streams(master_seed: int, count: int, start: int = 0) -> List[np.random.Generator]:
    """
    Independent, reproducible streams for replicas start..start+count-1.
    Stream i depends only on (master_seed, i), so changing the replica count
    leaves existing replicas untouched.
    """
    return [
        np.random.default_rng(np.random.SeedSequence([int(master_seed), i]))
        for i in range(start, start + count)
    ]


def sample_geometric(lam: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws of P(k) = (1 - lam) lam^k by inverse transform: floor(log U / log lam)."""
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"Geometric parameter lambda = {lam} must lie in [0, 1)")
    if lam == 0.0:
        return np.zeros(size, dtype=np.int64)
    u = 1.0 - rng.random(size)  # in (0, 1]
    return np.floor(np.log(u) / math.log(lam)).astype(np.int64)


def sample_invariant(params: ProcessParams, rng: np.random.Generator) -> Configuration:
    """Draw from the product geometric measure mu_lambda on the window."""
    return Configuration(sample_geometric(params.lambda_n, params.L, rng))


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    s = 1.0 - u * u
    inside = s > 1e-3
    out[inside] = np.exp(-1.0 / s[inside])
    return out


def _bump_d1(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    s = 1.0 - u * u
    inside = s > 1e-3
    ui, si = u[inside], s[inside]
    out[inside] = np.exp(-1.0 / si) * (-2.0 * ui / si**2)
    return out


def _bump_d2(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    s = 1.0 - u * u
    inside = s > 1e-3
    ui, si = u[inside], s[inside]
    out[inside] = np.exp(-1.0 / si) * (
        4.0 * ui**2 / si**4 - 2.0 / si**2 - 8.0 * ui**2 / si**3
    )
    return out


class TestFunction:
    """
    A smooth compactly supported observable f on [0, inf), with f', f'' and
    F(x) = -int_x^inf f(y) dy.

    F is tabulated once on a uniform grid (Gauss-Legendre per cell) and interpolated
    with cubic Hermite splines whose slopes are f itself.
    """

    __test__ = False  # not a pytest class

    def __init__(
        self,
        f: Callable,
        df: Callable,
        d2f: Callable,
        s_max: float,
        profile: str,
        params: dict,
        spacing: Optional[float] = None,
        F: Optional[Callable] = None,
    ):
        self._f = f
        self._df = df
        self._d2f = d2f
        self.s_max = float(s_max)
        self.profile = profile
        self.params = dict(params)
        self.neumann_ok = bool(float(np.asarray(df(np.array([0.0])))[0]) == 0.0)
        self._spline = None
        self._F = F
        if F is None and self.s_max > 0:
            self._spline = self._tabulate(spacing or self.s_max / Defaults.BUMP_GRID_POINTS)

    def __reduce__(self):
        # rebuilt from its recipe so replicas can cross process boundaries
        return make_test_function, (self.profile, self.params)

    @property
    def name(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()) if k != "n")
        return f"{self.profile}({args})"

    def _tabulate(self, spacing: float):
        cells = max(int(math.ceil(self.s_max / spacing)), 8)
        grid = np.linspace(0.0, self.s_max, cells + 1)
        a, b = grid[:-1], grid[1:]
        half = 0.5 * (b - a)
        nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GAUSS_NODES[None, :]
        cell_mass = (self._f(nodes.ravel()).reshape(nodes.shape) * _GAUSS_WEIGHTS).sum(1) * half
        tail = np.concatenate((np.cumsum(cell_mass[::-1])[::-1], [0.0]))
        return CubicHermiteSpline(grid, -tail, self._f(grid))

    def f(self, x):
        return self._f(np.asarray(x, dtype=float))

    def df(self, x):
        return self._df(np.asarray(x, dtype=float))

    def d2f(self, x):
        return self._d2f(np.asarray(x, dtype=float))

    def F(self, x):
        x = np.asarray(x, dtype=float)
        if self._F is not None:
            return self._F(x)
        if self._spline is None:
            return np.zeros_like(x)
        inside = np.clip(x, 0.0, self.s_max)
        return np.where(x >= self.s_max, 0.0, self._spline(inside))

    def mass(self) -> float:
        return -float(self.F(np.array([0.0]))[0])

    def l2_norm_sq(self) -> float:
        if self.s_max <= 0:
            return 0.0
        val, _ = integrate.quad(
            lambda y: float(self.f(np.array([y]))[0]) ** 2,
            0.0,
            self.s_max,
            epsabs=Defaults.QUAD_TOL,
            limit=200,
        )
        return val

    def __repr__(self):
        return f"TestFunction({self.name})"


def _grid_spacing(width: float, n: Optional[int]) -> float:
    spacing = width / Defaults.BUMP_GRID_POINTS
    if n:
        spacing = min(spacing, 1.0 / (4 * n))
    return spacing


def make_bump(
    center: float,
    width: float,
    amplitude: float = 1.0,
    n: Optional[int] = None,
    allow_boundary: bool = False,
) -> TestFunction:
    """
    The standard bump exp(-1/(1-u^2)) rescaled to [center - width/2, center + width/2].
    :param n: scaling parameter; refines the F grid to spacing <= 1/(4n)
    :param allow_boundary: accept supports straddling 0 (then f'(0) is generally nonzero)
    """
    if width <= 0:
        raise ParameterError(f"Bump width must be positive, got {width}")
    lo = center - width / 2
    if lo < 0 and not allow_boundary:
        raise ParameterError(
            f"Bump support [{lo}, {center + width / 2}] crosses 0; "
            f"use make_neumann_bump or allow_boundary=True"
        )
    scale = 2.0 / width

    def f(x):
        return amplitude * _bump(scale * (x - center))

    def df(x):
        return amplitude * scale * _bump_d1(scale * (x - center))

    def d2f(x):
        return amplitude * scale**2 * _bump_d2(scale * (x - center))

    params = dict(center=center, width=width, amplitude=amplitude, n=n)
    profile = "boundary_bump" if lo < 0 else "bump"
    return TestFunction(
        f, df, d2f, center + width / 2, profile, params, spacing=_grid_spacing(width, n)
    )


def make_neumann_bump(width: float, amplitude: float = 1.0, n: Optional[int] = None) -> TestFunction:
    """Half bump centred at the origin: support [0, width), f'(0) = 0 exactly."""
    if width <= 0:
        raise ParameterError(f"Bump width must be positive, got {width}")

    def f(x):
        return amplitude * _bump(x / width)

    def df(x):
        return amplitude / width * _bump_d1(x / width)

    def d2f(x):
        return amplitude / width**2 * _bump_d2(x / width)

    params = dict(width=width, amplitude=amplitude, n=n)
    return TestFunction(f, df, d2f, width, "neumann_bump", params, spacing=_grid_spacing(width, n))


def make_boundary_bump(width: float, amplitude: float = 1.0, n: Optional[int] = None) -> TestFunction:
    """A bump whose support straddles the origin, so f'(0) != 0."""
    return make_bump(width / 4, width, amplitude=amplitude, n=n, allow_boundary=True)


def make_zero() -> TestFunction:
    def zero(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return TestFunction(zero, zero, zero, 0.0, "zero", {})


def make_test_function(profile: str, params: Optional[dict] = None, **kwargs) -> TestFunction:
    """Name-based construction used by config files."""
    params = dict(params or {}, **kwargs)
    params.pop("allow_boundary", None)
    if profile == "bump":
        return make_bump(**params)
    if profile == "neumann_bump":
        return make_neumann_bump(**params)
    if profile == "boundary_bump":
        if "center" in params:
            return make_bump(**params, allow_boundary=True)
        return make_boundary_bump(**params)
    if profile == "zero":
        return make_zero()
    if profile == "mollifier":
        return make_mollifier(params["epsilon"]).as_test_function(n=params.get("n"))
    raise ParameterError(f"Unknown test-function profile '{profile}'")


class Mollifier:
    """
    phi_eps(x) = phi(x/eps)/eps and h_eps(x) = int_x^inf phi_eps, for a fixed smooth
    bump phi >= 0 supported in (0, 1) with unit mass. h_eps(0) = 1, h_eps = 0 on [eps, inf).
    """

    _norm: Optional[float] = None
    _tail: Optional[CubicHermiteSpline] = None

    def __init__(self, epsilon: float):
        if epsilon <= 0:
            raise ParameterError(f"Mollifier width must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self._prepare_profile()

    @classmethod
    def _prepare_profile(cls):
        if cls._norm is not None:
            return
        mass, _ = integrate.quad(lambda u: float(_bump(np.array([2 * u - 1]))[0]), 0, 1, epsabs=1e-15)
        cls._norm = mass
        grid = np.linspace(0.0, 1.0, 1025)
        a, b = grid[:-1], grid[1:]
        half = 0.5 * (b - a)
        nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GAUSS_NODES[None, :]
        cell = (_bump(2 * nodes.ravel() - 1).reshape(nodes.shape) * _GAUSS_WEIGHTS).sum(1) * half
        tail = np.concatenate((np.cumsum(cell[::-1])[::-1], [0.0]))
        tail /= tail[0]
        cls._tail = CubicHermiteSpline(grid, tail, -_bump(2 * grid - 1) / mass)

    def phi(self, x):
        u = np.asarray(x, dtype=float) / self.epsilon
        return _bump(2 * u - 1) / (self._norm * self.epsilon)

    def dphi(self, x):
        u = np.asarray(x, dtype=float) / self.epsilon
        return 2 * _bump_d1(2 * u - 1) / (self._norm * self.epsilon**2)

    def d2phi(self, x):
        u = np.asarray(x, dtype=float) / self.epsilon
        return 4 * _bump_d2(2 * u - 1) / (self._norm * self.epsilon**3)

    def h(self, x):
        u = np.asarray(x, dtype=float) / self.epsilon
        out = np.where(u >= 1.0, 0.0, self._tail(np.clip(u, 0.0, 1.0)))
        return np.where(u <= 0.0, 1.0, out)

    def as_test_function(self, n: Optional[int] = None) -> TestFunction:
        """phi_eps as an observable; its F is -h_eps."""
        return TestFunction(
            self.phi,
            self.dphi,
            self.d2phi,
            self.epsilon,
            "mollifier",
            dict(epsilon=self.epsilon, n=n),
            F=lambda x: -self.h(x),
        )


def make_mollifier(epsilon: float) -> Mollifier:
    return Mollifier(epsilon)
