"""Experiment configuration: YAML in, validated models out.

Unknown keys are errors.  Validation messages carry the line of the
offending key in the source file.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """The configuration file is malformed or violates the schema."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    kind: Literal["Flat", "SingleWell", "AlternatingWells", "SW", "AW"]
    N: Union[int, list[int]]
    origin: int | None = None
    targets: list[int] | None = None

    @field_validator("N")
    @classmethod
    def _positive(cls, v):
        sizes = v if isinstance(v, list) else [v]
        if not sizes or any(n < 1 for n in sizes):
            raise ValueError("system sizes must be >= 1")
        if isinstance(v, list) and any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("N ladder must be strictly increasing")
        return v

    @property
    def ladder(self) -> list[int]:
        return list(self.N) if isinstance(self.N, list) else [self.N]


class DensitySpec(_Strict):
    family: Literal["uniform", "beta"]
    low: float = 0.0
    high: float = 1.0
    a: float | None = None
    b: float | None = None

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 <= self.low < self.high <= 1.0:
            raise ValueError("need 0 <= low < high <= 1")
        if self.family == "beta" and (self.a is None or self.b is None or self.a <= 0 or self.b <= 0):
            raise ValueError("beta density needs positive a and b")
        return self


class MuSection(_Strict):
    atoms: dict[float, float] | None = None
    density: DensitySpec | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.atoms is None) == (self.density is None):
            raise ValueError("give exactly one of atoms or density")
        if self.atoms is not None:
            if any(not 0.0 <= t <= 1.0 for t in self.atoms) or any(w <= 0 for w in self.atoms.values()):
                raise ValueError("atoms must lie in [0, 1] with positive weights")
            if abs(sum(self.atoms.values()) - 1.0) > 1e-12:
                raise ValueError("atom weights must sum to 1")
        return self


class SimulateAnalysis(_Strict):
    kind: Literal["simulate"]
    mode: Literal["steps", "switches"] = "steps"
    n: int = Field(10_000, ge=1)
    k: int = Field(1_000, ge=1)


class OccupationAnalysis(_Strict):
    kind: Literal["occupation"]
    n: int = Field(1_000_000, ge=1)
    bins: int = Field(64, ge=1)
    method: Literal["trajectory", "renewal"] = "trajectory"


class DominanceAnalysis(_Strict):
    kind: Literal["dominance"]
    zero_factor: float = Field(0.1, gt=0, lt=1)
    converge_rel: float = Field(0.05, gt=0)
    margin_factor: float = Field(3.0, gt=0)
    refinements: int = Field(3, ge=0)
    bl_trend: bool = True


class MetastabilityAnalysis(_Strict):
    kind: Literal["metastability"]
    theta: float = Field(ge=0.0, le=1.0)
    source: Literal["Exact", "MonteCarlo"] = "Exact"
    k: int = Field(10_000, ge=1)
    c1: float = 0.9
    c2: float = 1.1
    ks_max: float = 0.1
    coverage_min: float = 0.95
    mc_budget: float = Field(1e7, gt=0)
    curve_points: int = Field(1000, ge=2)

    @model_validator(mode="after")
    def _window(self):
        if not 0 < self.c1 < 1 < self.c2:
            raise ValueError("need 0 < c1 < 1 < c2")
        return self


class ThetaRange(_Strict):
    start: float
    stop: float
    step: float = Field(gt=0)


class SweepAnalysis(_Strict):
    kind: Literal["sweep"]
    thetas: Union[list[float], ThetaRange]


Analysis = Annotated[
    Union[SimulateAnalysis, OccupationAnalysis, DominanceAnalysis, MetastabilityAnalysis, SweepAnalysis],
    Field(discriminator="kind"),
]


class RunSection(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    replicas: int = Field(1, ge=1)
    threads: int | None = Field(None, ge=1)
    out_dir: str = "out"
    max_total_steps: float = Field(2e9, gt=0)


class ExperimentConfig(_Strict):
    model: ModelSection
    mu: MuSection | None = None
    analysis: Analysis | None = None
    run: RunSection = RunSection()


def _line_index(node, path=(), out=None):
    """Map key paths to 1-based source lines."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            k = key.value
            for typed in (k, _scalar(k)):
                out[path + (typed,)] = key.start_mark.line + 1
                _line_index(value, path + (typed,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, path + (i,), out)
    return out


def _scalar(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _locate(lines: dict, loc: tuple) -> int:
    loc = tuple(loc)
    while loc:
        if loc in lines:
            return lines[loc]
        # drop union/discriminator tags that pydantic inserts in locations
        loc = loc[:-1]
    return lines.get((), 1)


def _clean_loc(loc) -> tuple:
    tags = {"SimulateAnalysis", "OccupationAnalysis", "DominanceAnalysis", "MetastabilityAnalysis",
            "SweepAnalysis", "simulate", "occupation", "dominance", "metastability", "sweep",
            "int", "list[int]", "list[float]", "ThetaRange"}
    return tuple(p for p in loc if not (isinstance(p, str) and p in tags))


def load_config(path) -> tuple[ExperimentConfig, str]:
    """Parse and validate a YAML config; returns the model and the file's sha256."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    text = raw.decode("utf-8")
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{path}:{line}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a mapping with model/mu/analysis/run sections")
    lines = _line_index(node)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = _clean_loc(err["loc"])
            where = ".".join(str(p) for p in loc) or "<root>"
            msgs.append(f"{path}:{_locate(lines, loc)}: {where}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc
    return cfg, hashlib.sha256(raw).hexdigest()
