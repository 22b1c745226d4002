"""Experiment configuration files and their content hash."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .augment import AugmentPolicy
from .models import ModelSpec
from .train import TrainConfig

DATA_ROOT_ENV = "LMBENCH_DATA_ROOT"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one command invocation.

    ``datasets`` maps a benchmark name to either ``{"index": path}`` (output of
    ``prepare``) or ``{"root": path}``; with neither, ``$LMBENCH_DATA_ROOT/<name>``
    is used as root. ``output_dir`` is excluded from the hash.
    """

    datasets: dict = field(default_factory=dict)
    target: Optional[str] = None
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: Optional[AugmentPolicy] = field(default_factory=AugmentPolicy)
    chain: Optional[dict] = None
    chains: Optional[dict] = None
    grid: Optional[object] = None
    folds: int = 5
    checkpoint: Optional[str] = None
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        # the experiment seed drives training and augmentation streams
        object.__setattr__(self, "train", replace(self.train, seed=self.seed))
        if self.augment is not None:
            object.__setattr__(self, "augment", replace(self.augment, seed=self.seed))

    def to_dict(self) -> dict:
        return {
            "datasets": self.datasets,
            "target": self.target,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "augment": self.augment.to_dict() if self.augment else None,
            "chain": self.chain,
            "chains": self.chains,
            "grid": self.grid,
            "folds": self.folds,
            "checkpoint": self.checkpoint,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "model" in d:
            d["model"] = ModelSpec.from_dict(d["model"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if "augment" in d and d["augment"] is not None:
            d["augment"] = AugmentPolicy.from_dict(d["augment"])
        return cls(**d)

    def hash_payload(self) -> dict:
        d = self.to_dict()
        d.pop("output_dir")
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.hash_payload())

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None):
        kw = {}
        if seed is not None:
            kw["seed"] = seed
        if output_dir is not None:
            kw["output_dir"] = output_dir
        return replace(self, **kw) if kw else self

    def dataset_source(self, name: str) -> dict:
        src = dict(self.datasets.get(name) or {})
        if not src:
            env = os.environ.get(DATA_ROOT_ENV)
            if not env:
                raise ValueError(f"no source for dataset {name!r} and ${DATA_ROOT_ENV} unset")
            src["root"] = str(Path(env) / name)
        return src


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    return ExperimentConfig.from_dict(data or {})


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return path
