"""
The exclusion picture of the zero-range process with a source.

Particle positions are z_1 < z_2 < ... < z_{L+1} with z_1 = base and
z_{x+1} - z_x = eta(x) + 1, so site x of the zero-range process is the gap in front of
particle x. A zero-range particle crossing the cut between x and x+1 to the right
shrinks gap x and widens gap x+1: particle x+1 steps one unit to the left. Displacements are
therefore counted positive to the left, and particle x+1 has displacement J(x).
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from zrpflux.common import logger
from zrpflux.common.exceptions import MissingAccumulatorError, ParameterError
from zrpflux.core import Configuration, replay
from zrpflux.engine.trajectory import Trajectory


def zrp_to_exclusion(config: Configuration, base: int = 0) -> np.ndarray:
    gaps = np.asarray(config.eta, dtype=np.int64) + 1
    return base + np.concatenate(([0], np.cumsum(gaps)))


def exclusion_to_zrp(positions) -> Configuration:
    z = np.asarray(positions, dtype=np.int64)
    gaps = np.diff(z)
    if np.any(gaps < 1):
        raise ParameterError("Exclusion positions must be strictly increasing")
    return Configuration(gaps - 1)


@dataclass
class DisplacementReport:
    tracked: int
    sample_times: List[float] = field(default_factory=list)
    mismatches: List[str] = field(default_factory=list)
    order_violations: int = 0
    multi_moves: int = 0
    restricted: bool = False

    @property
    def passed(self) -> bool:
        return not self.mismatches and self.order_violations == 0


def _move(z: np.ndarray, origin: int, target: int) -> int:
    """Translate one zero-range event; returns the number of particles moved."""
    if target > origin:
        z[origin:target] -= 1
        lo, hi = origin, target
    elif target < origin:
        z[target:origin] += 1
        lo, hi = target, origin
    else:
        return 0
    return hi - lo


def _ordered_near(z: np.ndarray, lo: int, hi: int) -> bool:
    a, b = max(lo - 1, 0), min(hi + 1, len(z))
    return bool(np.all(np.diff(z[a:b]) >= 1))


def tagged_displacement_check(
    traj: Trajectory, tracked: Optional[int] = None, base: int = 0
) -> DisplacementReport:
    """
    Replay the event log through the exclusion representation and compare, at every
    sample time, the displacement of particles 1..tracked with J(0..tracked-1).
    """
    if traj.events is None:
        raise MissingAccumulatorError("Trajectory has no event log; run with record_events=True")
    L = traj.config0.L
    limit = L + 1
    tracked = limit if tracked is None else tracked
    report = DisplacementReport(tracked=min(tracked, limit), restricted=tracked > limit)
    if report.restricted:
        logger.warning(f"Only {limit} exclusion particles exist; tracking restricted to 1..{limit}")
    tracked = report.tracked

    z0 = zrp_to_exclusion(traj.config0, base)
    z = z0.copy()
    log = traj.events
    done = 0
    for sample in traj.samples:
        for i in range(done, sample.n_events):
            origin, target = int(log.site[i]), int(log.target[i])
            moved = _move(z, origin, target)
            if moved > 1:
                report.multi_moves += 1
            if moved and not _ordered_near(z, min(origin, target), max(origin, target)):
                report.order_violations += 1
        done = sample.n_events

        if sample.ledger is not None:
            J, config = sample.ledger.J, sample.config
        else:
            config, ledger = replay(traj.config0, log.events(L, 0, done), L)
            J = ledger.J
        displacement = z0 - z
        if not np.array_equal(displacement[:tracked], J[:tracked]):
            bad = np.flatnonzero(displacement[:tracked] != J[:tracked]) + 1
            report.mismatches.append(f"t={sample.t}: particles {bad[:10].tolist()} disagree")
        if not np.array_equal(exclusion_to_zrp(z).eta, config.eta):
            report.mismatches.append(f"t={sample.t}: gaps do not reproduce the configuration")
        report.sample_times.append(sample.t)

    logger.info(
        f"Exclusion replay over {done} events: "
        f"{'exact' if report.passed else f'{len(report.mismatches)} mismatches'}"
    )
    return report
