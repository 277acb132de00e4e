from typing import List, Optional

import numpy as np
from pydantic import Field

from zrpflux.common import logger
from zrpflux.common.exceptions import AcceptanceFailure
from zrpflux.exact import (
    DifferenceFunctional,
    kv_inequality_check,
    ldp_limit,
    ldp_rate,
    legendre_rate,
    moment_ratio_table,
    psi_conditional,
    tail_bound_check,
    verify_gap_bound,
)
from zrpflux.exact.cache import ResultCache
from zrpflux.exact.ldp import sample_block_moments
from zrpflux.exact.small_system import gap_grid
from zrpflux.params import ProcessParams
from zrpflux.sampler import spawn_streams

from .base import Command, CommonInput
from .io import build_manifest


class GapInput(CommonInput):
    kmax: int = Field(12, ge=0, description="Largest particle number k.")
    lmax: int = Field(6, ge=1, description="Largest box length l.")
    cache: bool = Field(True, description="Reuse gaps cached on disk.")
    cache_dir: Optional[str] = Field(None, description="Cache directory.")


class GapCommand(Command):
    name = "gap"
    description = "Spectral gaps of the closed boxes k <= kmax, l <= lmax and the empirical kappa_0."
    args_schema = GapInput

    def run(self, args: GapInput):
        bundle = self.bundle(args)
        cache = ResultCache(args.cache_dir) if args.cache else None
        try:
            table = verify_gap_bound(gap_grid(args.kmax, args.lmax), cache)
        finally:
            if cache is not None:
                cache.close()
        bundle.write_table(
            "gap",
            ("k", "l", "states", "gap", "gap_times_klsq"),
            [(r.k, r.l, r.states, r.gap, r.gap_times_klsq) for r in table.rows],
        )
        bundle.write_json(
            "summary.json",
            {"kappa0": table.kappa0 if table.rows else None, "all_positive": table.all_positive, "boxes": len(table.rows)},
        )
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump()))


class PsiInput(CommonInput):
    kmax: int = Field(20, ge=0, description="Largest particle number k.")
    lmax: int = Field(6, ge=2, description="Largest box length l.")
    tolerance: float = Field(1e-12, gt=0, description="Largest accepted |formula - enumeration|.")


class PsiCommand(Command):
    name = "psi"
    description = "Closed-form psi^l(k) against enumeration of the canonical measure."
    args_schema = PsiInput

    def run(self, args: PsiInput):
        bundle = self.bundle(args)
        values = [psi_conditional(k, l) for k in range(args.kmax + 1) for l in range(2, args.lmax + 1)]
        bundle.write_table(
            "psi",
            ("k", "l", "formula", "enumeration", "discrepancy"),
            [(v.k, v.l, v.formula, v.enumeration, v.discrepancy) for v in values],
        )
        worst = max(v.discrepancy for v in values)
        bundle.write_json("summary.json", {"max_discrepancy": worst, "tolerance": args.tolerance})
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump()))
        logger.info(f"max |formula - enumeration| = {worst:.3g}")
        if worst > args.tolerance:
            raise AcceptanceFailure(f"psi discrepancy {worst:.3g} exceeds {args.tolerance:.3g}")


class LdpInput(CommonInput):
    b: float = Field(1.0, gt=0, description="Drift b.")
    a: float = Field(2.0, gt=0, description="Lower-tail level a.")
    n: List[float] = Field(default_factory=lambda: [10.0, 100.0, 1e3, 1e4], description="Values of n.")
    rho: Optional[float] = Field(None, gt=0, description="Also tabulate I_rho against its Legendre oracle.")
    points: List[float] = Field(default_factory=list, description="Arguments of the tabulated rate.")


class LdpCommand(Command):
    name = "ldp"
    description = "Convergence of I_{rho_n}(a_n) to b/a - log(b/a) - 1."
    args_schema = LdpInput

    def run(self, args: LdpInput):
        bundle = self.bundle(args)
        limits = [ldp_limit(args.b, args.a, n) for n in args.n]
        bundle.write_table(
            "ldp",
            ("n", "value", "limit", "error"),
            [(r.n, r.value_at_n, r.limit, r.error) for r in limits],
        )
        if args.rho is not None:
            points = args.points or list(np.linspace(0.25 * args.rho, 2 * args.rho, 8))
            rows = []
            for a in points:
                closed, oracle = ldp_rate(args.rho, a), legendre_rate(args.rho, a)
                rows.append((args.rho, a, closed, oracle, abs(closed - oracle)))
            bundle.write_table("rate", ("rho", "a", "closed", "legendre", "difference"), rows)
        bundle.write_json(
            "summary.json",
            {"limit": ldp_limit(args.b, args.a).limit, "lower_tail_regime": args.a > args.b},
        )
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump()))


class TailInput(CommonInput):
    n: List[float] = Field(default_factory=lambda: [10.0, 20.0, 50.0], description="Values of n.")
    b: float = Field(1.0, gt=0, description="Drift b.")
    l: List[int] = Field(default_factory=lambda: [1, 4, 16], description="Block lengths.")
    a: float = Field(2.0, gt=0, description="Lower-tail level a.")


class TailCommand(Command):
    name = "tail"
    description = "Exact block-average tail probabilities against the Chernoff bound."
    args_schema = TailInput

    def run(self, args: TailInput):
        bundle = self.bundle(args)
        reports = [tail_bound_check(n, args.b, l, args.a) for n in args.n for l in args.l]
        bundle.write_table(
            "tail",
            ("n", "l", "threshold", "probability", "rate", "slack", "holds", "vacuous"),
            [(r.n, r.l, r.threshold, r.probability, r.rate, r.slack, r.holds, r.vacuous) for r in reports],
        )
        failed = [(r.n, r.l) for r in reports if not r.holds]
        bundle.write_json("summary.json", {"instances": len(reports), "failed": failed})
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump()))
        if failed:
            raise AcceptanceFailure(f"Tail bound violated at (n, l) = {failed}")


class MomentsInput(CommonInput):
    n: List[float] = Field(default_factory=lambda: [10.0, 100.0], description="Values of n.")
    l: List[int] = Field(default_factory=lambda: [1, 4, 16], description="Block lengths.")
    b: float = Field(1.0, gt=0, description="Drift b.")
    samples: int = Field(0, ge=0, description="Monte Carlo draws per row (0: oracle only).")


class MomentsCommand(Command):
    name = "moments"
    description = "Variance, fourth moment and l^3 E(X - rho)^4 / n^4 of block averages."
    args_schema = MomentsInput

    def run(self, args: MomentsInput):
        bundle = self.bundle(args)
        table = moment_ratio_table(args.n, args.l, args.b)
        header = ["n", "l", "variance", "fourth", "ratio"]
        rows = [[m.n, m.l, m.variance, m.fourth, m.ratio] for m in table]
        if args.samples:
            header += ["mc_variance", "mc_fourth"]
            seed = args.seed or 0
            for row, m, rng in zip(rows, table, spawn_streams(seed, len(table))):
                row.extend(sample_block_moments(m.n, m.b, m.l, args.samples, rng))
        bundle.write_table("moments", header, rows)
        bundle.write_json("manifest.json", build_manifest(self.name, args.model_dump(), args.seed))


class KvInput(CommonInput):
    n: int = Field(8, gt=0, description="Scaling parameter n.")
    b: float = Field(1.0, gt=0, description="Drift b.")
    horizon: float = Field(0.01, gt=0, description="Macroscopic horizon T.")
    length: Optional[int] = Field(None, gt=1, description="Window length L.")
    bond: List[int] = Field(default_factory=lambda: [1], description="Bonds x of single-bond functionals.")
    replicas: int = Field(64, gt=1, description="Monte Carlo replicas.")
    grid_points: int = Field(64, gt=0, description="Time grid for the supremum.")
    workers: int = Field(1, gt=0, description="Worker processes.")
    max_events: Optional[int] = Field(None, gt=0, description="Event budget per replica.")


class KvCommand(Command):
    name = "kv"
    description = "Monte Carlo check of the Kipnis-Varadhan bound for single-bond difference functionals."
    args_schema = KvInput

    def run(self, args: KvInput):
        bundle = self.bundle(args)
        params = ProcessParams(n=args.n, b=args.b, horizon=args.horizon, lattice_len=args.length)
        seed = args.seed or 0
        rows, failed = [], []
        for i, x in enumerate(args.bond):
            report = kv_inequality_check(
                params,
                DifferenceFunctional.single_bond(x),
                args.replicas,
                # one seed per bond, distinct from the replica counter
                seed + i * 1_000_003,
                grid_points=args.grid_points,
                workers=args.workers,
                max_events=args.max_events,
            )
            rows.append((x, report.lhs_mean, report.lhs_stderr, report.rhs, report.ratio, report.holds))
            if not report.holds:
                failed.append(x)
        bundle.write_table("kv", ("bond", "lhs_mean", "lhs_stderr", "rhs", "ratio", "holds"), rows)
        bundle.write_json(
            "manifest.json",
            build_manifest(self.name, args.model_dump(), seed, args.replicas, extra={"params": params.as_dict()}),
        )
        if failed:
            raise AcceptanceFailure(f"Kipnis-Varadhan bound exceeded at bonds {failed}")
