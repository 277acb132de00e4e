"""
Experiment configuration files: sectioned key-value text read with configparser and
validated into pydantic models.

    [process]
    n = 8
    b = 1.0
    horizon = 0.1

    [lattice]
    length = 160
    kernel = 1:0.25, 2:0.25        ; positive half of p, optional

    [observables]
    f1 = bump center=1.5 width=1.0
    f2 = neumann_bump width=0.5
    require_neumann = true

    [sampling]
    times = 0.025, 0.05, 0.1       ; or dyadic_start / dyadic_count
    replicas = 4
    seed = 1234

    [she]
    h = 0.03125
    dt = 0.0005

    [output]
    dir = run-01
"""

import configparser
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from zrpflux.common.exceptions import ConfigError, ParameterError
from zrpflux.params import JumpKernel, ProcessParams
from zrpflux.sampler import Mollifier, TestFunction, make_mollifier, make_test_function
from zrpflux.she import SHEConfig

SECTIONS = ("process", "lattice", "observables", "sampling", "she", "output")


def _split_list(value):
    if isinstance(value, str):
        return [v for v in re.split(r"[,\s]+", value.strip()) if v]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProcessSection(_Section):
    n: int = Field(gt=0, description="Scaling parameter n.")
    b: float = Field(gt=0, description="Drift b; lambda_n = 1 - b/n.")
    horizon: float = Field(ge=0, description="Macroscopic time horizon T.")
    lam: Optional[float] = Field(
        None, ge=0, lt=1, description="Explicit lambda_n (general mode) instead of 1 - b/n."
    )


class LatticeSection(_Section):
    length: Optional[int] = Field(None, gt=0, description="Window length L.")
    kernel: Optional[Dict[int, float]] = Field(
        None, description="Positive half of a symmetric jump kernel, e.g. '1:0.25, 2:0.25'."
    )

    @field_validator("kernel", mode="before")
    @classmethod
    def parse_kernel(cls, value):
        if not isinstance(value, str):
            return value
        half = {}
        for item in _split_list(value):
            z, _, p = item.partition(":")
            if not p:
                raise ValueError(f"kernel entry '{item}' is not of the form z:p")
            half[int(z)] = float(p)
        return half


class ObservableSpec(_Section):
    name: str
    profile: str
    params: Dict[str, float] = Field(default_factory=dict)


class ObservablesSection(_Section):
    items: List[ObservableSpec] = Field(default_factory=list)
    require_neumann: bool = False


class SamplingSection(_Section):
    times: Optional[List[float]] = Field(None, description="Increasing macroscopic sample times.")
    dyadic_start: Optional[float] = Field(None, gt=0)
    dyadic_count: Optional[int] = Field(None, gt=0)
    replicas: int = Field(1, gt=0)
    seed: int = 0
    workers: int = Field(1, gt=0)
    max_events: Optional[int] = Field(None, gt=0)
    record_events: bool = False

    @field_validator("times", mode="before")
    @classmethod
    def split_times(cls, value):
        return _split_list(value)

    @model_validator(mode="after")
    def resolve_times(self):
        if self.times is None:
            if self.dyadic_start is None or self.dyadic_count is None:
                raise ValueError("give either times or dyadic_start and dyadic_count")
            self.times = list(self.dyadic_start * 2.0 ** np.arange(self.dyadic_count))
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be increasing")
        return self


class SHESection(_Section):
    h: float = Field(1.0 / 32, gt=0, description="Cell size.")
    dt: float = Field(5e-4, gt=0, description="Time step.")
    scheme: Literal["cn", "explicit"] = "cn"
    init: Literal["zero", "stationary"] = "stationary"
    domain_len: Optional[float] = Field(None, gt=0)
    batch: int = Field(64, gt=0)
    replicas: Optional[int] = Field(None, gt=0)
    mollifiers: List[float] = Field(default_factory=list, description="Mollifier widths.")
    tolerance: float = Field(0.1, gt=0)

    @field_validator("mollifiers", mode="before")
    @classmethod
    def split_mollifiers(cls, value):
        return _split_list(value)


class OutputSection(_Section):
    dir: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    svg: bool = False


class ExperimentConfig(_Section):
    process: ProcessSection
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    observables: ObservablesSection = Field(default_factory=ObservablesSection)
    sampling: SamplingSection = Field(default_factory=lambda: SamplingSection(times=[]))
    she: SHESection = Field(default_factory=SHESection)
    output: OutputSection = Field(default_factory=OutputSection)

    source: Optional[str] = Field(None, exclude=True)

    def to_params(self) -> ProcessParams:
        kernel = JumpKernel(half=self.lattice.kernel) if self.lattice.kernel else None
        return ProcessParams(
            n=self.process.n,
            b=self.process.b,
            horizon=self.process.horizon,
            lattice_len=self.lattice.length,
            kernel=kernel,
            lam=self.process.lam,
        )

    def build_observables(self) -> List[TestFunction]:
        out = []
        for spec in self.observables.items:
            params = dict(spec.params)
            if spec.profile not in ("zero", "mollifier"):
                params["n"] = self.process.n
            try:
                f = make_test_function(spec.profile, params)
            except (ParameterError, TypeError) as e:
                raise ConfigError(
                    str(e), field=f"observables.{spec.name}", line=_line_of(self.source, "observables", spec.name)
                )
            if self.observables.require_neumann and not f.neumann_ok:
                raise ConfigError(
                    f"Observable {spec.name} = {f.name} has f'(0) != 0, but require_neumann is set: "
                    f"the Neumann limit only holds for test functions flat at the origin",
                    field=f"observables.{spec.name}",
                    line=_line_of(self.source, "observables", spec.name),
                )
            out.append(f)
        return out

    def build_mollifiers(self) -> List[Mollifier]:
        return [make_mollifier(eps) for eps in self.she.mollifiers]

    def she_config(self) -> SHEConfig:
        params = self.to_params()
        return SHEConfig(
            b=self.process.b,
            h=self.she.h,
            dt=self.she.dt,
            domain_len=self.she.domain_len,
            scheme=self.she.scheme,
            init=self.she.init,
            diffusivity_factor=params.jump_kernel.diffusivity_factor,
            batch=self.she.batch,
        )

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _line_of(text: Optional[str], section: str, key: Optional[str]) -> Optional[int]:
    """1-based line of `key` inside `[section]` (or of the section header)."""
    if not text:
        return None
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r"^\[([^\]]+)\]", stripped)
        if header:
            current = header.group(1).strip().lower()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            name = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            if name == key.lower():
                return i
    return None


def _parse_observable(name: str, value: str) -> Dict[str, Any]:
    tokens = value.split()
    if not tokens:
        raise ValueError("empty observable definition")
    params = {}
    for token in tokens[1:]:
        k, sep, v = token.partition("=")
        if not sep:
            raise ValueError(f"parameter '{token}' is not of the form key=value")
        params[k] = float(v)
    return {"name": name, "profile": tokens[0], "params": params}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e.message}", line=getattr(e, "lineno", None))

    raw: Dict[str, Any] = {}
    for section in parser.sections():
        name = section.lower()
        if name not in SECTIONS:
            raise ConfigError(
                f"Unknown section [{section}], expected one of {SECTIONS}",
                field=name,
                line=_line_of(text, name, None),
            )
        raw[name] = dict(parser[section])

    if "observables" in raw:
        entries = raw["observables"]
        section: Dict[str, Any] = {"items": []}
        for key, value in entries.items():
            if key == "require_neumann":
                section[key] = value
                continue
            try:
                section["items"].append(_parse_observable(key, value))
            except ValueError as e:
                raise ConfigError(str(e), field=f"observables.{key}", line=_line_of(text, "observables", key))
        raw["observables"] = section

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(part) for part in err["loc"]]
        section = loc[0] if loc else None
        key = loc[1] if len(loc) > 1 else None
        if section == "observables" and key == "items" and len(loc) > 2:
            key = raw["observables"]["items"][int(loc[2])]["name"]
        field = ".".join(p for p in (section, key) if p)
        raise ConfigError(f"{source}: {err['msg']}", field=field or None, line=_line_of(text, section, key) if section else None)
    config.source = text
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")
    return parse_config(text, source=str(path))
