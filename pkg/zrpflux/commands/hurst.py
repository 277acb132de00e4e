import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import Field

from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import ConfigError
from zrpflux.params import ProcessParams
from zrpflux.sampler import spawn_streams
from zrpflux.stats import covariance_fit, crossover_time, dyadic_times, fbm_paths, hurst_estimate

from .base import Command, CommonInput
from .io import build_manifest, read_series


class HurstInput(CommonInput):
    bundle: Optional[str] = Field(
        None,
        description="Output bundle (or series file) of simulate or she; omit to calibrate on exact fBM.",
        json_schema_extra={"positional": True},
    )
    observable: str = Field("j0", description="Series to analyse.")
    level: float = Field(0.95, gt=0, lt=1, description="Confidence level.")
    resamples: int = Field(Defaults.BOOTSTRAP_RESAMPLES, gt=0, description="Bootstrap resamples.")
    fit_h: Optional[float] = Field(None, gt=0, lt=1, description="Hurst index of the covariance fit (default: estimate).")
    tmin: Optional[float] = Field(None, gt=0, description="Drop bundle times below this macroscopic time.")
    window_depth: float = Field(
        Defaults.HURST_WINDOW_DEPTH,
        gt=0,
        description=(
            "Warn when particle-bundle times start fewer than this many crossover times "
            "(1 + rho_n)^2 / (2 n^4) in; the local slope there is still biased towards H = 1/2."
        ),
    )
    h: float = Field(0.25, gt=0, lt=1, description="Hurst index of the calibration paths.")
    replicas: int = Field(256, gt=1, description="Calibration replicas.")
    t0: float = Field(1e-3, gt=0, description="First dyadic calibration time; exact fBM is self-similar at every scale.")
    count: int = Field(8, gt=2, description="Number of dyadic calibration times.")


def load_ensemble(path: str, observable: str):
    series = read_series(path)
    if observable not in series:
        raise ConfigError(f"No series '{observable}' in {path}; found {sorted(series)}", field="observable")
    times, Y = series[observable]
    keep = times > 0
    Y = Y[:, keep]
    # replicas cut short by the event budget carry gaps
    Y = Y[~np.any(np.isnan(Y), axis=1)]
    return times[keep], Y


def bundle_params(path: str) -> Optional[ProcessParams]:
    """Process parameters recorded in a simulate manifest, if the bundle has one."""
    manifest = Path(path) / "manifest.json"
    if not manifest.is_file():
        return None
    with open(manifest, encoding="utf-8") as f:
        params = json.load(f).get("params")
    if not params:
        return None
    return ProcessParams(n=params["n"], b=params["b"], lam=params["lambda_n"], lattice_len=params["lattice_len"])


class HurstCommand(Command):
    name = "hurst"
    description = "Hurst exponent from the variance scaling of a series, with bootstrap CI and fBM covariance fit."
    args_schema = HurstInput

    def run(self, args: HurstInput):
        out = self.bundle(args)
        seed = args.seed or 0
        fit_rng, boot_rng = spawn_streams(seed, 2)
        window = {}
        if args.bundle is None:
            times = dyadic_times(args.t0, args.count)
            Y = fbm_paths(times, args.h, args.replicas, fit_rng)
            source = {"calibration": "fbm", "H": args.h, "replicas": args.replicas}
        else:
            times, Y = load_ensemble(args.bundle, args.observable)
            source = {"bundle": args.bundle, "observable": args.observable}
            if args.tmin is not None:
                keep = times >= args.tmin
                times, Y = times[keep], Y[:, keep]
                window["tmin"] = args.tmin
            params = bundle_params(args.bundle)
            if params is not None and args.observable == "j0":
                start = args.window_depth * crossover_time(params)
                early = int(np.sum(times < start))
                window.update(settled_from=start, short_time_points=early)
                if early:
                    logger.warning(
                        f"{early} of {len(times)} times lie below {start:.4g} = {args.window_depth:g} crossover "
                        f"times; the estimate is biased upwards there"
                    )

        est = hurst_estimate(Y, times, resamples=args.resamples, level=args.level, rng=boot_rng)
        result = {
            "H": est.H,
            "ci": list(est.ci),
            "level": est.level,
            "slope": est.slope,
            "replicas": est.replicas,
            "flagged": est.flagged,
            "source": source,
            "times": times.tolist(),
        }
        if window:
            result["window"] = window
        if len(times) >= 3:
            fit = covariance_fit(Y, times, args.fit_h or min(max(est.H, 0.01), 0.99), args.resamples, args.level, boot_rng)
            result["covariance_fit"] = {
                "H": fit.H,
                "scale": fit.scale,
                "scale_ci": list(fit.scale_ci),
                "residual": fit.residual,
                "flagged": fit.flagged,
            }
        out.write_json("hurst.json", result)
        out.write_json("manifest.json", build_manifest(self.name, args.model_dump(), seed))
