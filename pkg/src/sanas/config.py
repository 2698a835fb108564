"""Run configuration: one strict JSON document, unknown keys rejected.

Example::

    {
      "graph": "toy",
      "data": "prepared/toy",
      "model": {"d_z": 8, "d_phi": 8, "gamma_bias_init": 1.0},
      "training": {"lam": 1e-5, "epochs": 20, "batch_size": 1, "seed": 0},
      "features": {"dct": null},
      "streaming": {"threshold": 0.5}
    }

``graph`` is a built-in name (``kws``, ``toy``) or a path to a graph JSON.
Relative paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .controller import ModelConfig
from .errors import ConfigurationError, InputError
from .eval import StreamingParams
from .supernet import SuperNetworkSpec, builtin_graph, load_graph
from .training import TrainingConfig

BUILTIN_GRAPHS = ("kws", "toy")
STATIC_CHOICES = (None, "backbone", "full")


def _strict(cls, d: Any, where: str):
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{where} must be a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**d)
    except TypeError as err:
        raise ConfigurationError(f"{where}: {err}") from err
    except InputError as err:
        raise ConfigurationError(f"{where}: {err}") from err


@dataclass(frozen=True)
class FeatureConfig:
    dct: int | None = None

    def __post_init__(self):
        if self.dct is not None and not (isinstance(self.dct, int) and 1 <= self.dct <= 40):
            raise ConfigurationError("features.dct must be null or an integer in [1, 40]")


@dataclass
class Config:
    graph: str = "toy"
    data: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    streaming: StreamingParams = field(default_factory=StreamingParams)
    static: str | None = None
    base_dir: Path | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, d: Any, base_dir: Path | None = None) -> Config:
        if not isinstance(d, Mapping):
            raise ConfigurationError("config must be a JSON object")
        known = {"graph", "data", "model", "training", "features", "streaming", "static"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        graph = d.get("graph", "toy")
        data = d.get("data")
        if not isinstance(graph, str) or (data is not None and not isinstance(data, str)):
            raise ConfigurationError("graph and data must be strings")
        static = d.get("static")
        if static not in STATIC_CHOICES:
            raise ConfigurationError(f"static must be one of {STATIC_CHOICES}, got {static!r}")
        for key in ("training", "model", "streaming"):
            for k, v in d.get(key, {}).items() if isinstance(d.get(key, {}), Mapping) else ():
                if isinstance(v, float) and not math.isfinite(v):
                    raise ConfigurationError(f"{key}.{k} must be finite")
        return cls(
            graph=graph,
            data=data,
            model=_strict(ModelConfig, d.get("model", {}), "model"),
            training=_strict(TrainingConfig, d.get("training", {}), "training"),
            features=_strict(FeatureConfig, d.get("features", {}), "features"),
            streaming=_strict(StreamingParams, d.get("streaming", {}), "streaming"),
            static=static,
            base_dir=base_dir,
        )

    def to_dict(self, runtime: bool = True) -> dict:
        """Plain JSON form. ``runtime=False`` drops the thread count, which
        changes speed but never results, so that artifacts do not depend on it."""
        training = self.training.to_dict()
        if not runtime:
            training.pop("threads")
        return {
            "graph": self.graph,
            "data": self.data,
            "model": asdict(self.model),
            "training": training,
            "features": asdict(self.features),
            "streaming": asdict(self.streaming),
            "static": self.static,
        }

    def with_overrides(self, **sections: Mapping[str, Any]) -> Config:
        """New config with ``section={key: value}`` overrides applied."""
        d = self.to_dict()
        for section, values in sections.items():
            if section in ("graph", "data", "static"):
                if values is not None:
                    d[section] = values
                continue
            for k, v in values.items():
                if v is not None:
                    d[section][k] = v
        return Config.from_dict(d, self.base_dir)

    def resolve(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def load_graph(self) -> SuperNetworkSpec:
        if self.graph in BUILTIN_GRAPHS:
            return builtin_graph(self.graph)
        path = self.resolve(self.graph)
        if not path.is_file():
            raise InputError(f"graph file {path} not found")
        return load_graph(path)

    def data_dir(self) -> Path:
        if self.data is None:
            raise ConfigurationError("no dataset directory configured (set 'data' or pass --data)")
        return self.resolve(self.data)


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise InputError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except ValueError as err:
        raise ConfigurationError(f"{path}: invalid JSON ({err})") from err
    return Config.from_dict(raw, path.parent)
