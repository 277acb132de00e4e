import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from zrpflux.common.exceptions import (
    ParameterError,
    PreconditionError,
    ShapeError,
    SiteRangeError,
)
from zrpflux.params import JumpKernel


@dataclass
class Configuration:
    """
    Occupancy counts on the window {1..L}. `eta[x - 1]` is the number of particles at site x.
    """

    eta: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.int64)
        if self.eta.ndim != 1:
            raise ShapeError(f"Configuration must be one-dimensional, got shape {self.eta.shape}")
        if np.any(self.eta < 0):
            raise ParameterError("Occupancy counts must be nonnegative")

    @classmethod
    def empty(cls, L: int) -> "Configuration":
        return cls(np.zeros(L, dtype=np.int64))

    @property
    def L(self) -> int:
        return len(self.eta)

    @property
    def total(self) -> int:
        return int(self.eta.sum())

    def at(self, x: int) -> int:
        if not 1 <= x <= self.L:
            raise SiteRangeError(f"Site {x} is outside the window 1..{self.L}")
        return int(self.eta[x - 1])

    def copy(self) -> "Configuration":
        return Configuration(self.eta.copy())


@dataclass
class CurrentLedger:
    """
    Net currents J(0..L) across the cuts between {0..x} and {x+1..}.
    J(0) is the source current, J(L) the current into the right reservoir.
    """

    J: np.ndarray

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=np.int64)

    @classmethod
    def zeros(cls, L: int) -> "CurrentLedger":
        return cls(np.zeros(L + 1, dtype=np.int64))

    @property
    def L(self) -> int:
        return len(self.J) - 1

    def checksum(self) -> str:
        return hashlib.blake2b(self.J.tobytes(), digest_size=8).hexdigest()

    def copy(self) -> "CurrentLedger":
        return CurrentLedger(self.J.copy())


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> int:
        return -1 if self is Direction.LEFT else 1


@dataclass(frozen=True)
class JumpEvent:
    """
    One transition of the process.

    site 0 is the source (creation into site `offset`), site L + 1 the right reservoir
    (injection into site L + 1 - offset); any other site jumps by `offset` in `direction`.
    Targets at or left of 0 annihilate, targets right of L leave into the reservoir.
    """

    site: int
    direction: Direction = Direction.RIGHT
    micro_time: float = 1.0
    offset: int = 1

    def __post_init__(self):
        if not self.micro_time > 0:
            raise ParameterError(f"Event waiting time must be positive, got {self.micro_time}")
        if self.offset < 1:
            raise ParameterError(f"Event offset must be positive, got {self.offset}")

    def endpoints(self, L: int) -> Tuple[int, int]:
        """(origin, target) in 0..L+1, 0 and L+1 standing for the two reservoirs."""
        if not 0 <= self.site <= L + 1:
            raise SiteRangeError(f"Event site {self.site} is outside 0..{L + 1}")
        if self.site == 0:
            target = self.offset
        elif self.site == L + 1:
            target = L + 1 - self.offset
        else:
            target = self.site + self.direction.sign * self.offset
        if not 1 <= target <= L and self.site in (0, L + 1):
            raise SiteRangeError(f"Reservoir event targets site {target} outside the window")
        return self.site, min(max(target, 0), L + 1)


def cross_cuts(J: np.ndarray, origin: int, target: int):
    """Book one particle moving from origin to target (both in 0..L+1) on the cut currents."""
    if target > origin:
        J[origin:target] += 1
    elif target < origin:
        J[target:origin] -= 1


def apply_event(
    config: Configuration, ledger: CurrentLedger, ev: JumpEvent, inplace: bool = False
) -> Tuple[Configuration, CurrentLedger]:
    """
    Execute one event, updating exactly the cut currents the particle crosses.
    :param inplace: mutate the given objects instead of copies
    """
    L = config.L
    if ledger.L != L:
        raise ShapeError(f"Ledger window {ledger.L} does not match configuration window {L}")
    origin, target = ev.endpoints(L)

    if 1 <= origin <= L and config.eta[origin - 1] < 1:
        raise PreconditionError(f"Jump from empty site {origin}")

    if not inplace:
        config, ledger = config.copy(), ledger.copy()

    if 1 <= origin <= L:
        config.eta[origin - 1] -= 1
    if 1 <= target <= L:
        config.eta[target - 1] += 1
    cross_cuts(ledger.J, origin, target)
    return config, ledger


def check_continuity(
    config0: Configuration,
    configT: Configuration,
    ledger: CurrentLedger,
    kernel: Optional[JumpKernel] = None,
) -> bool:
    """
    J(x-1) - J(x) == eta_T(x) - eta_0(x) at every site, exactly.
    With a kernel of range R, the pairwise form J(x) - J(y) == sum_{z=x+1..y} (eta_T - eta_0)(z)
    is checked for every y - x > R.
    """
    if config0.L != configT.L or ledger.L != config0.L:
        raise ShapeError(
            f"Windows differ: config0 {config0.L}, configT {configT.L}, ledger {ledger.L}"
        )
    delta = configT.eta - config0.eta
    J = ledger.J
    if kernel is None or kernel.is_nearest_neighbour():
        return bool(np.array_equal(J[:-1] - J[1:], delta))

    R = kernel.range
    # c[x] = J(x) + sum_{z<=x} delta(z) must agree on every pair farther apart than R
    c = J + np.concatenate(([0], np.cumsum(delta)))
    idx = np.arange(len(c))
    far = (idx[None, :] - idx[:, None]) > R
    return bool(np.all((c[:, None] == c[None, :])[far]))


def replay(
    config0: Configuration, events: Iterable[JumpEvent], L: Optional[int] = None
) -> Tuple[Configuration, CurrentLedger]:
    """Re-run an event sequence from config0 with fresh currents."""
    config = config0.copy()
    ledger = CurrentLedger.zeros(L or config.L)
    for ev in events:
        apply_event(config, ledger, ev, inplace=True)
    return config, ledger
