from typing import List, Optional

from pydantic import Field, model_validator

from zrpflux.common.exceptions import AcceptanceFailure
from zrpflux.core import Configuration
from zrpflux.engine.ensemble import run_ensemble
from zrpflux.exclusion import exclusion_to_zrp, tagged_displacement_check, zrp_to_exclusion
from zrpflux.sampler import sample_invariant, spawn_streams

from .base import Command, CommonInput, ConfigInput
from .config import load_config
from .io import build_manifest


class MapInput(CommonInput):
    eta: Optional[List[int]] = Field(None, description="Occupations eta(1..L) to map to particle positions.")
    positions: Optional[List[int]] = Field(None, description="Exclusion positions to map back to occupations.")
    config: Optional[str] = Field(None, description="Map an invariant sample drawn with this config instead.")
    base: int = Field(0, description="Position of the first exclusion particle.")

    @model_validator(mode="after")
    def one_source(self):
        given = [x is not None for x in (self.eta, self.positions, self.config)]
        if sum(given) != 1:
            raise ValueError("give exactly one of --eta, --positions, --config")
        return self


class MapCommand(Command):
    name = "map"
    description = "Map between zero-range occupations and exclusion particle positions."
    args_schema = MapInput

    def run(self, args: MapInput):
        bundle = self.bundle(args)
        if args.positions is not None:
            positions = list(args.positions)
            eta = exclusion_to_zrp(positions).eta.tolist()
        else:
            if args.eta is not None:
                config = Configuration(args.eta)
            else:
                experiment = load_config(args.config)
                config = sample_invariant(experiment.to_params(), spawn_streams(args.seed or 0, 1)[0])
            eta = config.eta.tolist()
            positions = zrp_to_exclusion(config, args.base).tolist()
        bundle.write_table("positions", ("particle", "position"), enumerate(positions, start=1))
        bundle.write_table("occupations", ("site", "eta"), enumerate(eta, start=1))
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump(), args.seed))


class ExclusionInput(ConfigInput):
    replicas: Optional[int] = Field(None, gt=0, description="Replica count (overrides the config file).")
    tracked: Optional[int] = Field(None, gt=0, description="Particles 1..tracked to follow (default: all).")
    base: int = Field(0, description="Position of the first exclusion particle.")


class ExclusionCommand(Command):
    name = "exclusion"
    description = "Replay runs in the exclusion picture and check tagged displacements against the currents."
    args_schema = ExclusionInput

    def run(self, args: ExclusionInput):
        config = load_config(args.config)
        bundle = self.bundle(args, out=config.output.dir, format=config.output.format)
        params = config.to_params()
        seed = config.sampling.seed if args.seed is None else args.seed
        replicas = args.replicas or config.sampling.replicas
        trajectories = run_ensemble(
            params,
            config.sampling.times,
            [],
            seed,
            replicas,
            workers=config.sampling.workers,
            record_events=True,
            max_events=config.sampling.max_events,
        )
        rows, failed = [], []
        for traj in trajectories:
            report = tagged_displacement_check(traj, args.tracked, args.base)
            rows.append(
                (
                    traj.replica, report.tracked, len(report.sample_times), len(report.mismatches),
                    report.order_violations, report.multi_moves, report.passed,
                )
            )
            if not report.passed:
                failed.append(traj.replica)
        bundle.write_table(
            "exclusion",
            ("replica", "tracked", "samples", "mismatches", "order_violations", "multi_moves", "passed"),
            rows,
        )
        bundle.write_json(
            "manifest.json",
            build_manifest(self.name, config.echo(), seed, replicas, extra={"params": params.as_dict()}),
        )
        if failed:
            raise AcceptanceFailure(f"Displacement differs from the current for replicas {failed}")
