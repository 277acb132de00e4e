import csv
import json
import os
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import zrpflux
from zrpflux.common import Defaults, logger
from zrpflux.common.exceptions import ConfigError
from zrpflux.repo import code_version
from zrpflux.sampler import TestFunction

SERIES_HEADER = ("t", "replica", "observable", "value")
BUMP_PROFILE = "exp(-1/(1-u^2)) on (-1, 1), rescaled to the support"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{Defaults.CSV_DIGITS}g")
    if value is None:
        return ""
    return str(value)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    return obj


def resolve_out_dir(out: Optional[str]) -> Path:
    return Path(out or os.environ.get(Defaults.OUT_ENV_VAR) or Defaults.DEFAULT_OUT_DIR)


class OutputBundle:
    """
    The files a command writes into one directory: tables or series in the chosen
    format, plus JSON summary and manifest.
    """

    def __init__(self, out: Optional[str] = None, format: str = "csv"):
        if format not in ("csv", "json"):
            raise ConfigError(f"Unknown output format '{format}'", field="format")
        self.root = resolve_out_dir(out)
        self.format = format
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def _record(self, path: Path):
        self.written.append(path)
        logger.info(f"Wrote {path}")

    def write_table(self, stem: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        rows = list(rows)
        if self.format == "json":
            path = self.path(f"{stem}.json")
            records = [dict(zip(header, row)) for row in rows]
            self._dump_json(path, records)
        else:
            path = self.path(f"{stem}.csv")
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([fmt(v) for v in row])
        self._record(path)
        return path

    def write_series(self, rows: Iterable[Tuple[float, int, str, float]], stem: str = "series") -> Path:
        return self.write_table(stem, SERIES_HEADER, rows)

    def write_json(self, name: str, obj) -> Path:
        path = self.path(name)
        self._dump_json(path, obj)
        self._record(path)
        return path

    def _dump_json(self, path: Path, obj):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(to_jsonable(obj), f, indent=2, sort_keys=True)
            f.write("\n")

    def write_npz(self, name: str, arrays: Dict[str, np.ndarray]) -> Path:
        path = self.path(name)
        np.savez_compressed(path, **arrays)
        self._record(path)
        return path

    def write_svg(self, name: str, times: Sequence[float], series: Dict[str, np.ndarray]) -> Path:
        """Ensemble mean and +-1 standard deviation band of each series."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        t = np.asarray(times)
        for label, Y in series.items():
            Y = np.atleast_2d(Y)
            mean, std = Y.mean(axis=0), Y.std(axis=0)
            ax.plot(t, mean, label=label)
            ax.fill_between(t, mean - std, mean + std, alpha=0.2)
        ax.set_xlabel("t")
        ax.legend(fontsize="small")
        path = self.path(name)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        self._record(path)
        return path


def read_series(path) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Read a series file (CSV or JSON) back into observable -> (times, replicas x times).
    """
    path = Path(path)
    if path.is_dir():
        candidates = [path / "series.csv", path / "series.json"]
        found = [p for p in candidates if p.exists()]
        if not found:
            raise ConfigError(f"No series file in bundle {path}")
        path = found[0]
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as f:
            records = json.load(f)
    else:
        with open(path, encoding="utf-8", newline="") as f:
            records = list(csv.DictReader(f))

    cells = defaultdict(dict)
    for r in records:
        cells[r["observable"]][(int(r["replica"]), float(r["t"]))] = float(r["value"])
    out = {}
    for name, values in cells.items():
        replicas = sorted({k[0] for k in values})
        times = sorted({k[1] for k in values})
        Y = np.full((len(replicas), len(times)), np.nan)
        ri = {r: i for i, r in enumerate(replicas)}
        ti = {t: j for j, t in enumerate(times)}
        for (r, t), v in values.items():
            Y[ri[r], ti[t]] = v
        out[name] = (np.array(times), Y)
    return out


def build_manifest(
    command: str,
    config: Dict[str, Any],
    master_seed: Optional[int] = None,
    replicas: Optional[int] = None,
    observables: Sequence[TestFunction] = (),
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    manifest = {
        "command": command,
        "package_version": zrpflux.__version__,
        "code_version": code_version(),
        "config": config,
        "master_seed": master_seed,
        "replicas": replicas,
        "stream_derivation": "numpy.random.SeedSequence([master_seed, replica])",
        "bump_profile": BUMP_PROFILE,
        "observables": [
            {"name": f.name, "profile": f.profile, "params": f.params, "neumann_ok": f.neumann_ok}
            for f in observables
        ],
    }
    if master_seed is not None and replicas is not None:
        manifest["stream_keys"] = [[master_seed, i] for i in range(replicas)]
    if extra:
        manifest.update(extra)
    return manifest
