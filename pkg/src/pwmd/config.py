"""Strict experiment configuration (TOML or JSON) and model construction."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import models as M
from .core import DistSpec


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DistConfig(Strict):
    family: Literal[
        "rademacher", "laplace_unit_var", "centered_exponential", "uniform_centered", "gaussian", "lattice"
    ]
    rate: Optional[float] = None
    half_width: Optional[float] = None
    values: Optional[list[float]] = None
    probs: Optional[list[float]] = None
    center: bool = True

    def build(self) -> DistSpec:
        if self.family == "lattice":
            return DistSpec.lattice(self.values or [], self.probs or [], self.center)
        if self.family == "centered_exponential":
            return DistSpec.centered_exponential(1.0 if self.rate is None else self.rate)
        if self.family == "uniform_centered":
            return DistSpec.uniform(math.sqrt(3.0) if self.half_width is None else self.half_width)
        return DistSpec(self.family)


def _default_dist(family="rademacher"):
    return Field(default_factory=lambda: DistConfig(family=family))


class IidSumConfig(Strict):
    type: Literal["iid_sum"]
    n: PositiveInt
    dist: DistConfig = _default_dist()

    def build(self, n: int | None = None):
        return M.IidSum(n or self.n, self.dist.build())


class MultiIidConfig(Strict):
    type: Literal["multi_iid"]
    n: PositiveInt
    d: PositiveInt
    dist: DistConfig = _default_dist()

    def build(self, n: int | None = None):
        return M.MultiIid(n or self.n, self.d, self.dist.build())


class CombCltConfig(Strict):
    """Either an explicit array `c` or a random one from `c_seed` (double-centred uniforms)."""

    type: Literal["comb_clt"]
    n: Optional[PositiveInt] = None
    c: Optional[list[list[float]]] = None
    c_seed: Optional[int] = None
    sigma2: Union[float, list[list[float]], None] = None
    noise: DistConfig = _default_dist("gaussian")

    @model_validator(mode="after")
    def _one_source(self):
        if (self.c is None) == (self.c_seed is None):
            raise ValueError("give exactly one of 'c' or 'c_seed'")
        if self.c_seed is not None and self.n is None:
            raise ValueError("'n' is required with 'c_seed'")
        return self

    def build(self, n: int | None = None):
        if self.c is not None:
            c = np.asarray(self.c, dtype=float)
        else:
            size = n or self.n
            c = M.centered(M.rng_stream(self.c_seed).random((size, size)))
        s2 = self.sigma2
        if s2 is not None and not isinstance(s2, list):
            s2 = np.full(c.shape, float(s2))
        return M.CombClt(c, s2, self.noise.build())


class Entry(Strict):
    idx: list[int]
    value: float


class HomSumConfig(Strict):
    type: Literal["hom_sum"]
    n: PositiveInt
    q: int = 2
    perfect_matching: bool = False
    entries: Optional[list[Entry]] = None
    dist: DistConfig = _default_dist()

    @model_validator(mode="after")
    def _one_source(self):
        if self.perfect_matching == (self.entries is not None):
            raise ValueError("give exactly one of 'perfect_matching = true' or 'entries'")
        return self

    def build(self, n: int | None = None):
        dist = self.dist.build()
        if self.perfect_matching:
            return M.HomSum.perfect_matching(n or self.n, dist)
        idx = [sorted(e.idx) for e in self.entries]
        return M.HomSum(self.q, self.n, idx, [e.value for e in self.entries], dist)


class GaussChaos2Config(Strict):
    type: Literal["gauss_chaos2"]
    n: Optional[PositiveInt] = None
    F: Optional[list[list[float]]] = None
    perfect_matching: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if self.perfect_matching == (self.F is not None):
            raise ValueError("give exactly one of 'perfect_matching = true' or 'F'")
        if self.perfect_matching and self.n is None:
            raise ValueError("'n' is required with perfect_matching")
        return self

    def build(self, n: int | None = None):
        if self.perfect_matching:
            return M.GaussChaos2.perfect_matching(n or self.n)
        return M.GaussChaos2(np.asarray(self.F, dtype=float))


class MDepConfig(Strict):
    type: Literal["m_dep"]
    n: PositiveInt
    m: int
    kernel: Optional[list[float]] = None
    dist: DistConfig = _default_dist("gaussian")

    def build(self, n: int | None = None):
        return M.MDep(n or self.n, self.m, tuple(self.kernel) if self.kernel else None, self.dist.build())


class GraphDepConfig(Strict):
    type: Literal["graph_dep"]
    n: PositiveInt
    edges: list[tuple[int, int]]
    dist: DistConfig = _default_dist("gaussian")

    def build(self, n: int | None = None):
        return M.GraphDep(self.n, tuple(self.edges), self.dist.build())


ModelConfig = Annotated[
    Union[IidSumConfig, MultiIidConfig, CombCltConfig, HomSumConfig, GaussChaos2Config, MDepConfig, GraphDepConfig],
    Field(discriminator="type"),
]


class GridConfig(Strict):
    x: Optional[list[float]] = None
    n: Optional[list[PositiveInt]] = None
    p: Optional[list[float]] = None

    @model_validator(mode="after")
    def _nonempty(self):
        for name in ("x", "n", "p"):
            vals = getattr(self, name)
            if vals is not None and not vals:
                raise ValueError(f"grid.{name} must be nonempty")
        if self.x is not None and any(b < a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("grid.x must be sorted ascending")
        return self


class EstimationConfig(Strict):
    seed: int
    reps: Optional[PositiveInt] = None
    method: Literal["plain", "tilted"] = "plain"
    p: float = 1.0
    threads: PositiveInt = 1


class BoundConfig(Strict):
    application: str
    params: dict[str, Any] = Field(default_factory=dict)


class OutputConfig(Strict):
    directory: Optional[str] = None
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv"])


class VerifyConfig(Strict):
    filter: Optional[str] = None


KINDS_NEEDING = {
    "tail_ratio": ("model", "grid.x", "estimation.reps"),
    "wasserstein_scaling": ("model", "estimation.reps"),
    "bound_eval": ("bound",),
    "oracle_check": ("model", "grid.x"),
    "verify_suite": (),
}


class ExperimentConfig(Strict):
    kind: Literal["tail_ratio", "wasserstein_scaling", "bound_eval", "oracle_check", "verify_suite"]
    estimation: EstimationConfig
    model: Optional[ModelConfig] = None
    grid: GridConfig = Field(default_factory=GridConfig)
    bound: Optional[BoundConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)
    verify: Optional[VerifyConfig] = None

    @model_validator(mode="after")
    def _required_blocks(self):
        for path in KINDS_NEEDING[self.kind]:
            obj = self
            for part in path.split("."):
                obj = getattr(obj, part, None)
            if obj is None:
                raise ValueError(f"{path} is required for kind '{self.kind}'")
        if self.kind == "wasserstein_scaling" and (self.grid.n is None) == (self.grid.p is None):
            raise ValueError("wasserstein_scaling needs exactly one of grid.n or grid.p")
        return self


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse TOML (or JSON by extension) and validate strictly."""
    path = Path(path)
    text = path.read_text()
    data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    return ExperimentConfig.model_validate(data)


def config_echo(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)
