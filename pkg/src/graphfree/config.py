"""Run configuration: dataclasses plus JSON/TOML loading.

A config file is a flat table of :class:`TrainConfig` fields, optionally
with ``[data]``, ``[nodeclass]`` and ``[bench]`` sub-tables.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ArgumentError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SPATIAL_KINDS = ("GraphConv", "Gfs")
ADJACENCY_KINDS = ("True", "R", "M", "I", "I+R", "I+M")
GFS_VARIANTS = ("Full", "Mean", "MeanP", "NoLNP", "NoRes", "LNNNoP")


class _Table:
    @classmethod
    def from_dict(cls, raw: dict | None):
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ArgumentError(f"unknown {cls.__name__} field(s): {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig(_Table):
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    spatial_kind: str = "GraphConv"
    adjacency_kind: str = "True"
    gfs_variant: str = "Full"
    ln_affine: bool = True
    hidden_dim: int = 16
    window_in: int = 12
    window_out: int = 12
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.spatial_kind not in SPATIAL_KINDS:
            raise ArgumentError(f"spatial_kind must be one of {SPATIAL_KINDS}")
        if self.adjacency_kind not in ADJACENCY_KINDS:
            raise ArgumentError(f"adjacency_kind must be one of {ADJACENCY_KINDS}")
        if self.gfs_variant not in GFS_VARIANTS:
            raise ArgumentError(f"gfs_variant must be one of {GFS_VARIANTS}")
        positive = ("epochs", "batch_size", "learning_rate", "hidden_dim", "window_in",
                    "window_out", "adam_eps")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ArgumentError("Adam betas must lie in [0, 1)")
        if self.seed < 0 or self.epsilon < 0:
            raise ArgumentError("seed and epsilon must be non-negative")


@dataclass(frozen=True)
class DataConfig(_Table):
    """Synthetic diffusion dataset, or files when ``csv`` is given."""

    n: int = 50
    t: int = 2880
    alpha: float = 0.3
    noise: float = 0.02
    amplitude: float = 0.1
    obs_noise: float = 0.2
    phase_spread: float = 1.0
    bandwidth: float = 0.15
    cutoff: float = 0.3
    seed: int = 7
    csv: str | None = None
    edgelist: str | None = None
    undirected: bool = False


@dataclass(frozen=True)
class NodeClassConfig(_Table):
    n: int = 400
    classes: int = 4
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 16
    separation: float = 10.0
    data_seed: int = 11
    hidden_dim: int = 32
    epochs: int = 200
    learning_rate: float = 1e-2
    kind: str = "GfsStack3"


@dataclass(frozen=True)
class BenchConfig(_Table):
    kinds: tuple = ("Gfs", "GraphConv")
    n_list: tuple = (100, 250, 500, 1000, 2000)
    d_in: int = 64
    d_out: int = 64
    batch_size: int = 64
    batches: int = 1
    repeats: int = 5
    warmups: int = 2
    with_backward: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if self.repeats < 3:
            raise ArgumentError("repeats must be >= 3")
        if list(self.n_list) != sorted(self.n_list):
            raise ArgumentError("n_list must be ascending")


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig
    data: DataConfig
    nodeclass: NodeClassConfig
    bench: BenchConfig

    def to_dict(self):
        return {"train": self.train.to_dict(), "data": self.data.to_dict(),
                "nodeclass": self.nodeclass.to_dict(), "bench": self.bench.to_dict()}


def parse_config(raw: dict, seed: int | None = None) -> RunConfig:
    raw = dict(raw)
    sub = {k: raw.pop(k, None) for k in ("data", "nodeclass", "bench")}
    if seed is not None:
        raw["seed"] = seed
    return RunConfig(TrainConfig.from_dict(raw), DataConfig.from_dict(sub["data"]),
                     NodeClassConfig.from_dict(sub["nodeclass"]),
                     BenchConfig.from_dict(sub["bench"]))


def read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def load_config(path=None, seed: int | None = None) -> RunConfig:
    return parse_config(read_config_file(path) if path else {}, seed)
