import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from typing import List, Optional, Sequence

import numpy as np
from rich.progress import Progress

from zrpflux.common import logger
from zrpflux.common.exceptions import EventBudgetExceeded
from zrpflux.params import ProcessParams
from zrpflux.sampler import TestFunction, spawn_streams

from .simulation import run
from .trajectory import Trajectory


def _run_replica(args) -> Trajectory:
    params, sample_times, observables, rng, replica, options = args
    try:
        return run(params, sample_times, observables, rng, replica=replica, **options)
    except EventBudgetExceeded as e:
        # the partial trajectory travels back flagged instead of sinking the pool
        return e.partial


def run_ensemble(
    params: ProcessParams,
    sample_times: Sequence[float],
    observables: Sequence[TestFunction],
    master_seed: int,
    replicas: int,
    workers: int = 1,
    first_replica: int = 0,
    record_configs: bool = False,
    record_events: bool = False,
    max_events: Optional[int] = None,
) -> List[Trajectory]:
    """
    Run independent replicas, replica i on the stream derived from (master_seed, i).
    The result is ordered by replica index whatever the worker count, so ensembles are
    reproducible and can be extended by running more replicas from first_replica on.

    Replicas that exhaust the event budget come back with `partial=True`.
    """
    streams = spawn_streams(master_seed, replicas, start=first_replica)
    options = dict(
        record_configs=record_configs, record_events=record_events, max_events=max_events
    )
    jobs = [
        (params, list(sample_times), list(observables), rng, first_replica + i, options)
        for i, rng in enumerate(streams)
    ]
    logger.info(
        f"Running {replicas} replicas (n={params.n}, b={params.b}, L={params.L}) on {workers} worker(s)"
    )
    out = []
    with Progress(transient=True, disable=not logger.isEnabledFor(logging.INFO)) as progress:
        task = progress.add_task("replicas", total=len(jobs))
        with ProcessPoolExecutor(max_workers=workers) if workers > 1 else nullcontext() as pool:
            for traj in (pool.map if pool else map)(_run_replica, jobs):
                out.append(traj)
                progress.advance(task)

    partial = [t.replica for t in out if t.partial]
    if partial:
        logger.warning(f"{len(partial)} replica(s) stopped at the event budget: {partial}")
    return out


def ensemble_matrix(trajectories: Sequence[Trajectory], name: str) -> np.ndarray:
    """Replicas x sample times matrix of X_t(f); partial replicas are dropped."""
    rows = [t.series(name) for t in trajectories if not t.partial]
    return np.vstack(rows) if rows else np.zeros((0, 0))


def j0_matrix(trajectories: Sequence[Trajectory], scale: float = 1.0) -> np.ndarray:
    rows = [t.j0 * scale for t in trajectories if not t.partial]
    return np.vstack(rows) if rows else np.zeros((0, 0))
