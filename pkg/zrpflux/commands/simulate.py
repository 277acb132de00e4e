from typing import Dict, List, Optional

import numpy as np
from pydantic import Field

from zrpflux.common import logger
from zrpflux.core import check_continuity
from zrpflux.engine.ensemble import run_ensemble
from zrpflux.engine.trajectory import Trajectory
from zrpflux.fields import bg_residual, martingale_part, mollified_current_gap

from .base import Command, ConfigInput
from .config import ExperimentConfig, load_config
from .io import OutputBundle, build_manifest


class SimulateInput(ConfigInput):
    replicas: Optional[int] = Field(None, gt=0, description="Replica count (overrides the config file).")
    workers: Optional[int] = Field(None, gt=0, description="Worker processes.")
    events: Optional[bool] = Field(None, description="Record the event log to events.npz.")
    svg: Optional[bool] = Field(None, description="Also write series.svg.")


def series_rows(trajectories: List[Trajectory]) -> List[tuple]:
    """Long-format rows (t, replica, observable, value) of every recorded series."""
    rows = []
    for traj in trajectories:
        if not traj.samples:
            continue
        columns: Dict[str, np.ndarray] = {"j0": traj.j0}
        nn = not traj.params.kernel_mode or traj.params.jump_kernel.is_nearest_neighbour()
        for name, f in traj.observables.items():
            columns[name] = traj.series(name)
            if nn:
                mart = martingale_part(traj, name)
                columns[f"M:{name}"] = mart.martingale
                columns[f"QV:{name}"] = mart.quadratic_variation
                columns[f"BG:{name}"] = bg_residual(traj, name)
            if f.profile == "mollifier":
                columns[f"gap:{name}"] = mollified_current_gap(traj, name)
        for i, t in enumerate(traj.times):
            for name in sorted(columns):
                rows.append((float(t), traj.replica, name, columns[name][i]))
    return rows


def continuity_holds(trajectories: List[Trajectory]) -> bool:
    for traj in trajectories:
        kernel = traj.params.jump_kernel
        for s in traj.samples:
            if s.config is not None and not check_continuity(traj.config0, s.config, s.ledger, kernel):
                logger.error(f"Continuity fails for replica {traj.replica} at t = {s.t}")
                return False
    return True


def summarize(config: ExperimentConfig, trajectories: List[Trajectory]) -> dict:
    params = config.to_params()
    complete = [t for t in trajectories if not t.partial]
    summary = {
        "params": params.as_dict(),
        "replicas": len(trajectories),
        "partial": any(t.partial for t in trajectories),
        "partial_replicas": [t.replica for t in trajectories if t.partial],
        "events": int(sum(t.n_events for t in trajectories)),
        "continuity": continuity_holds(trajectories),
        "observables": {},
    }
    if complete:
        for name in complete[0].observables:
            X = np.vstack([t.series(name) for t in complete])
            summary["observables"][name] = {
                "mean": X.mean(axis=0),
                "variance": X.var(axis=0, ddof=1) if len(complete) > 1 else np.zeros(X.shape[1]),
            }
        J = np.vstack([t.j0 for t in complete]) / params.n**1.5
        summary["j0_scaled_variance"] = J.var(axis=0, ddof=1) if len(complete) > 1 else None
    return summary


def event_arrays(trajectories: List[Trajectory]) -> Dict[str, np.ndarray]:
    arrays = {}
    for traj in trajectories:
        if traj.events is None:
            continue
        key = f"r{traj.replica}"
        arrays[f"{key}_config0"] = traj.config0.eta
        arrays[f"{key}_kind"] = traj.events.kind
        arrays[f"{key}_site"] = traj.events.site
        arrays[f"{key}_target"] = traj.events.target
        arrays[f"{key}_micro_time"] = traj.events.micro_time
    return arrays


def simulate(
    config: ExperimentConfig,
    bundle: OutputBundle,
    seed: Optional[int] = None,
    replicas: Optional[int] = None,
    workers: Optional[int] = None,
    record_events: Optional[bool] = None,
    svg: Optional[bool] = None,
) -> dict:
    params = config.to_params()
    observables = config.build_observables()
    observables += [m.as_test_function(n=params.n) for m in config.build_mollifiers()]
    sampling = config.sampling
    seed = sampling.seed if seed is None else seed
    replicas = replicas or sampling.replicas
    record_events = sampling.record_events if record_events is None else record_events

    trajectories = run_ensemble(
        params,
        sampling.times,
        observables,
        seed,
        replicas,
        workers=workers or sampling.workers,
        record_configs=True,
        record_events=record_events,
        max_events=sampling.max_events,
    )

    bundle.write_series(series_rows(trajectories))
    summary = summarize(config, trajectories)
    bundle.write_json("summary.json", summary)
    if record_events:
        bundle.write_npz("events.npz", event_arrays(trajectories))
    if config.output.svg if svg is None else svg:
        complete = [t for t in trajectories if not t.partial]
        if complete:
            curves = {f.name: np.vstack([t.series(f.name) for t in complete]) for f in observables}
            bundle.write_svg("series.svg", sampling.times, curves)
    bundle.write_json(
        "manifest.json",
        build_manifest("simulate", config.echo(), seed, replicas, observables, {"params": params.as_dict()}),
    )
    if summary["partial"]:
        logger.warning(f"Output in {bundle.root} is partial: event budget exhausted")
    return summary


class SimulateCommand(Command):
    name = "simulate"
    description = "Run the particle ensemble and write the field, current and martingale series."
    args_schema = SimulateInput

    def run(self, args: SimulateInput):
        config = load_config(args.config)
        bundle = self.bundle(args, out=config.output.dir, format=config.output.format)
        simulate(config, bundle, args.seed, args.replicas, args.workers, args.events, args.svg)
