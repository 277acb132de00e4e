from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from zrpflux.core import Configuration, CurrentLedger, Direction, JumpEvent
from zrpflux.params import ProcessParams
from zrpflux.sampler import TestFunction

from .kmc import JUMP, SOURCE


@dataclass
class FieldSample:
    """
    Everything recorded at one sample time: field values X_t^n(f), J(0), and the
    exact time integrals each registered observable needs.
    """

    t: float
    values: Dict[str, float]
    j0: int
    qv: Dict[str, float]
    acc_g: Dict[str, float]
    acc_eta: Dict[str, float]
    checksum: str
    n_events: int
    config: Optional[Configuration] = None
    ledger: Optional[CurrentLedger] = None


@dataclass
class EventLog:
    """Columnar event record: kind (jump/source/reservoir), origin, target, absolute micro time."""

    kind: np.ndarray
    site: np.ndarray
    target: np.ndarray
    micro_time: np.ndarray

    def __len__(self):
        return len(self.kind)

    @classmethod
    def empty(cls) -> "EventLog":
        return cls(
            np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        )

    def events(self, L: int, start: int = 0, stop: Optional[int] = None) -> List[JumpEvent]:
        stop = len(self) if stop is None else stop
        waits = np.diff(np.concatenate(([0.0], self.micro_time)))
        waits = np.maximum(waits, np.finfo(float).tiny)
        out = []
        for i in range(start, stop):
            origin, target = int(self.site[i]), int(self.target[i])
            if self.kind[i] == JUMP:
                direction = Direction.RIGHT if target > origin else Direction.LEFT
                out.append(JumpEvent(origin, direction, float(waits[i]), abs(target - origin)))
            elif self.kind[i] == SOURCE:
                out.append(JumpEvent(0, Direction.RIGHT, float(waits[i]), target))
            else:
                out.append(JumpEvent(L + 1, Direction.LEFT, float(waits[i]), L + 1 - target))
        return out


@dataclass
class Trajectory:
    params: ProcessParams
    config0: Configuration
    observables: Dict[str, TestFunction]
    samples: List[FieldSample] = field(default_factory=list)
    events: Optional[EventLog] = None
    partial: bool = False
    replica: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def j0(self) -> np.ndarray:
        return np.array([s.j0 for s in self.samples], dtype=np.int64)

    def series(self, name: str) -> np.ndarray:
        return np.array([s.values[name] for s in self.samples])

    @property
    def n_events(self) -> int:
        return self.samples[-1].n_events if self.samples else 0
