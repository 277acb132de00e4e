import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from zrpflux.common import Defaults
from zrpflux.common.exceptions import ParameterError


@dataclass(frozen=True)
class JumpKernel:
    """
    Symmetric finite-range jump distribution p(.), stored by its positive half.
    p(z) = p(-z) and sum over z != 0 of p(z) equals 1.
    """

    half: Dict[int, float] = field(default_factory=lambda: {1: 0.5})

    def __post_init__(self):
        if not self.half:
            raise ParameterError("Jump kernel needs at least one positive offset")
        for z, p in self.half.items():
            if int(z) != z or z <= 0:
                raise ParameterError(f"Kernel offsets must be positive integers, got {z}")
            if p < 0:
                raise ParameterError(f"Kernel weight p({z}) = {p} is negative")
        total = 2.0 * sum(self.half.values())
        if abs(total - 1.0) > 1e-12:
            raise ParameterError(f"Kernel is not normalized: sum of p(z) over z != 0 is {total}")

    @classmethod
    def from_mapping(cls, p: Mapping[int, float]) -> "JumpKernel":
        """
        Build a kernel from a full mapping z -> p(z) over both signs.
        Raises ParameterError if p is asymmetric, has mass at 0 or is not normalized.
        """
        if p.get(0, 0.0) != 0.0:
            raise ParameterError("Kernel must not put mass on the zero offset")
        half = {}
        for z, w in p.items():
            if z == 0:
                continue
            mirror = p.get(-z, 0.0)
            if abs(w - mirror) > 1e-12:
                raise ParameterError(f"Kernel is asymmetric: p({z}) = {w} but p({-z}) = {mirror}")
            if z > 0 and w > 0:
                half[int(z)] = float(w)
        return cls(half=half)

    @property
    def range(self) -> int:
        return max(z for z, p in self.half.items() if p > 0)

    @property
    def sigma2(self) -> float:
        """Sum over z > 0 of z^2 p(z)."""
        return sum(z * z * p for z, p in self.half.items())

    @property
    def diffusivity_factor(self) -> float:
        """Sum over z != 0 of z^2 p(z); equals 1 for the nearest-neighbour kernel."""
        return 2.0 * self.sigma2

    def tail(self, x: int) -> float:
        """Sum of p(z) over z >= x."""
        return sum(p for z, p in self.half.items() if z >= x)

    def is_nearest_neighbour(self) -> bool:
        return self.range == 1

    def magnitude_table(self):
        """Offsets and cumulative probabilities of |z| under 2p(|z|)."""
        values = np.array(sorted(self.half), dtype=np.int64)
        probs = np.array([2.0 * self.half[z] for z in values])
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        return values, cum

    def source_table(self):
        """Creation sites 1..R, cumulative weights proportional to the tails, and the tail sum."""
        sites = np.arange(1, self.range + 1, dtype=np.int64)
        tails = np.array([self.tail(int(x)) for x in sites])
        total = float(tails.sum())
        cum = np.cumsum(tails) / total
        cum[-1] = 1.0
        return sites, cum, total


NEAREST_NEIGHBOUR = JumpKernel()


@dataclass(frozen=True)
class ProcessParams:
    """
    Parameters of the zero-range process with a source at the origin.

    lambda_n = 1 - b/n unless `lam` is given (general mode, where the caller vouches
    for n(1 - lambda_n) -> b). The lattice window is {1..L}; L defaults to
    max(20 n, ceil(8 b n sqrt(T)) * 4).
    """

    n: int
    b: float
    horizon: float = 0.0
    lattice_len: Optional[int] = None
    kernel: Optional[JumpKernel] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if self.b <= 0:
            raise ParameterError(f"b must be positive, got {self.b}")
        if self.horizon < 0:
            raise ParameterError(f"horizon must be nonnegative, got {self.horizon}")
        lam = self.lambda_n
        if not 0.0 <= lam < 1.0:
            raise ParameterError(f"lambda_n = {lam} is outside [0, 1); need n >= b")
        if self.lattice_len is None:
            object.__setattr__(self, "lattice_len", default_window(self.n, self.b, self.horizon))
        elif int(self.lattice_len) != self.lattice_len or self.lattice_len < 1:
            raise ParameterError(f"lattice_len must be a positive integer, got {self.lattice_len}")

    @property
    def lambda_n(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        return 1.0 - self.b / self.n

    @property
    def rho_n(self) -> float:
        lam = self.lambda_n
        return lam / (1.0 - lam)

    @property
    def L(self) -> int:
        return self.lattice_len

    @property
    def jump_kernel(self) -> JumpKernel:
        return self.kernel if self.kernel is not None else NEAREST_NEIGHBOUR

    @property
    def kernel_mode(self) -> bool:
        return self.kernel is not None

    @property
    def time_scale(self) -> float:
        """Microscopic time units per macroscopic unit: n^4."""
        return float(self.n) ** 4

    @property
    def diffusivity(self) -> float:
        """b^2 times the kernel's diffusivity factor; the Laplacian coefficient of the limit."""
        return self.b**2 * self.jump_kernel.diffusivity_factor

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "b": self.b,
            "lambda_n": self.lambda_n,
            "rho_n": self.rho_n,
            "lattice_len": self.lattice_len,
            "horizon": self.horizon,
            "kernel": None if self.kernel is None else {str(z): p for z, p in self.kernel.half.items()},
        }


def default_window(n: int, b: float, horizon: float) -> int:
    spread = math.ceil(Defaults.WINDOW_SPREAD_FACTOR * b * n * math.sqrt(horizon)) * 4
    return max(Defaults.WINDOW_MIN_FACTOR * n, spread)


def set_kernel(params: ProcessParams, p: Mapping[int, float] | JumpKernel) -> ProcessParams:
    """
    Switch the engine to finite-range kernel mode.
    :param p: full symmetric mapping z -> p(z), or a JumpKernel
    """
    kernel = p if isinstance(p, JumpKernel) else JumpKernel.from_mapping(p)
    return dataclasses.replace(params, kernel=kernel)
