import math
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np

from zrpflux import core
from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import EventBudgetExceeded, ParameterError, PreconditionError
from zrpflux.core import Configuration, CurrentLedger
from zrpflux.fields import check_support, evaluate_field, observable_accumulators
from zrpflux.params import ProcessParams
from zrpflux.sampler import TestFunction, sample_invariant

from . import kmc
from .indexed_set import IndexedSiteSet
from .trajectory import EventLog, FieldSample, Trajectory


class SimState:
    """
    Mutable state of one replica: occupation, cut currents, the occupied-site index,
    the microscopic clock and the exact per-site time integrals.
    """

    def __init__(
        self,
        params: ProcessParams,
        config: Configuration,
        rng: np.random.Generator,
        record_events: bool = False,
    ):
        L = params.L
        if config.L != L:
            raise ParameterError(f"Configuration window {config.L} does not match L = {L}")
        self.params = params
        self.rng = rng

        self._eta = np.zeros(L + 2, dtype=np.int64)
        self._eta[1 : L + 1] = config.eta
        self._J = np.zeros(L + 1, dtype=np.int64)
        self._sites = IndexedSiteSet.from_occupancy(config.eta)
        self._clock = np.zeros(2)
        self._g_time = np.zeros(L + 2)
        self._eta_time = np.zeros(L + 2)
        self._last = np.zeros(L + 2)

        kernel = params.jump_kernel
        self._mag_val, self._mag_cum = kernel.magnitude_table()
        self._src_site, self._src_cum, tails = kernel.source_table()
        # creation at x in 1..R at rate 2 lambda_n tail(x), matching the exits from x to y <= 0
        self._src_rate = 2.0 * params.lambda_n * tails
        self._res_rate = self._src_rate

        self.record_events = record_events
        size = Defaults.EVENT_LOG_CHUNK if record_events else 0
        self._log = [
            np.zeros(size, dtype=np.int64),
            np.zeros(size, dtype=np.int64),
            np.zeros(size, dtype=np.int64),
            np.zeros(size),
        ]

    @property
    def config(self) -> Configuration:
        return Configuration(self._eta[1 : self.params.L + 1].copy())

    @property
    def ledger(self) -> CurrentLedger:
        return CurrentLedger(self._J.copy())

    @property
    def micro_time(self) -> float:
        return float(self._clock[0])

    @property
    def macro_time(self) -> float:
        return self.micro_time / self.params.time_scale

    @property
    def total_activation(self) -> float:
        return 2.0 * len(self._sites) + self._src_rate + self._res_rate

    @property
    def n_events(self) -> int:
        return int(self._sites.counters[1])

    def index_consistent(self) -> bool:
        return self._sites.consistent_with(self._eta[1 : self.params.L + 1])

    def _advance(self, t_stop: float, max_events: int) -> int:
        while True:
            status = kmc.advance(
                self._eta,
                self._J,
                self._sites.occ,
                self._sites.pos,
                self._sites.counters,
                self._clock,
                self._g_time,
                self._eta_time,
                self._last,
                self._mag_val,
                self._mag_cum,
                self._src_site,
                self._src_cum,
                self._src_rate,
                self._res_rate,
                self.params.L,
                self.rng,
                t_stop,
                max_events,
                self._log[0],
                self._log[1],
                self._log[2],
                self._log[3],
                self.record_events,
            )
            if status != kmc.LOG_FULL:
                return status
            # grow the log geometrically and continue where we stopped
            self._log = [np.concatenate((a, np.zeros_like(a))) for a in self._log]

    def step(self) -> "SimState":
        """Execute exactly one event."""
        if self.total_activation <= 0:
            raise PreconditionError("No active clock: empty configuration with lambda_n = 0")
        self._advance(math.inf, 1)
        return self

    def advance_to(self, t_macro: float, max_events: Optional[int] = None) -> bool:
        """
        Run until macro time t_macro. Returns False if max_events were executed first.
        """
        if t_macro < self.macro_time:
            raise ParameterError(f"Cannot go back in time: {t_macro} < {self.macro_time}")
        budget = Defaults.EVENT_BUDGET if max_events is None else max_events
        status = self._advance(t_macro * self.params.time_scale, budget)
        return status == kmc.DONE

    def integrals(self):
        """
        Exact time integrals up to now, per site 0..L+1 (micro units):
        occupation time of {eta >= 1} and particle time of eta.
        """
        now = self._clock[0]
        dt = now - self._last
        occupied = self._eta > 0
        G = self._g_time + np.where(occupied, dt, 0.0)
        E = self._eta_time + dt * self._eta
        return G, E

    def event_log(self) -> EventLog:
        size = int(self._sites.counters[2])
        return EventLog(*(a[:size].copy() for a in self._log))


def step(state: SimState) -> SimState:
    return state.step()


def _as_observables(
    observables: Union[Iterable[TestFunction], Dict[str, TestFunction], None]
) -> Dict[str, TestFunction]:
    if observables is None:
        return {}
    if isinstance(observables, dict):
        return dict(observables)
    return {f.name: f for f in observables}


def record_sample(
    state: SimState,
    t: float,
    config0: Configuration,
    observables: Dict[str, TestFunction],
    record_configs: bool = False,
) -> FieldSample:
    params = state.params
    G, E = state.integrals()
    tau = state.micro_time
    ledger = state.ledger
    values, qv, acc_g, acc_eta = {}, {}, {}, {}
    for name, f in observables.items():
        values[name] = evaluate_field(config0, ledger, params, f)
        acc_g[name], acc_eta[name], qv[name] = observable_accumulators(params, f, G, E, tau)
    return FieldSample(
        t=t,
        values=values,
        j0=int(ledger.J[0]),
        qv=qv,
        acc_g=acc_g,
        acc_eta=acc_eta,
        checksum=ledger.checksum(),
        n_events=state.n_events,
        config=state.config if record_configs else None,
        ledger=ledger if record_configs else None,
    )


def run(
    params: ProcessParams,
    sample_times: Sequence[float],
    observables: Union[Iterable[TestFunction], Dict[str, TestFunction], None],
    rng: np.random.Generator,
    record_configs: bool = False,
    record_events: bool = False,
    max_events: Optional[int] = None,
    config0: Optional[Configuration] = None,
    replica: int = 0,
) -> Trajectory:
    """
    Simulate one replica from the invariant measure (or from config0) and record
    a FieldSample at every sample time.

    :param max_events: event budget for the whole run
    :raises EventBudgetExceeded: with the trajectory recorded so far attached
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1:
        raise ParameterError("sample_times must be a flat sequence")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ParameterError("sample_times must be nonnegative and increasing")
    if len(times) and times[-1] > params.horizon * (1 + 1e-12):
        raise ParameterError(
            f"Sample time {times[-1]} exceeds the horizon T = {params.horizon}"
        )
    obs = _as_observables(observables)
    for f in obs.values():
        check_support(f, params)

    if config0 is None:
        config0 = sample_invariant(params, rng)
    state = SimState(params, config0, rng, record_events=record_events)
    traj = Trajectory(params, config0.copy(), obs, replica=replica)
    budget = Defaults.EVENT_BUDGET if max_events is None else int(max_events)

    for t in times:
        finished = state.advance_to(float(t), budget - state.n_events)
        if not finished:
            traj.partial = True
            if record_events:
                traj.events = state.event_log()
            logger.warning(
                f"Replica {replica}: event budget {budget} exhausted at t = {state.macro_time:.6g}"
            )
            raise EventBudgetExceeded(
                f"Event budget {budget} exhausted before t = {t} (reached {state.macro_time:.6g})",
                partial=traj,
            )
        traj.samples.append(record_sample(state, float(t), config0, obs, record_configs))

    if record_events:
        traj.events = state.event_log()
    logger.debug(f"Replica {replica}: {state.n_events} events, J(0) = {int(state.ledger.J[0])}")
    return traj


def replay(
    config0: Configuration, log: EventLog, params: ProcessParams, stop: Optional[int] = None
):
    """Re-execute a recorded event log through apply_event."""
    return core.replay(config0, log.events(params.L, 0, stop), params.L)


def event_rate_estimate(params: ProcessParams, occupied_fraction: float) -> float:
    """Expected events per macro unit: n^4 (2 L occupied_fraction + src + reservoir)."""
    _, _, tails = params.jump_kernel.source_table()
    return params.time_scale * (
        2.0 * params.L * occupied_fraction + 4.0 * params.lambda_n * tails
    )

