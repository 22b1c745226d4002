"""Sequential fine-tuning chains (ImageNet -> A [-> B] -> target) and their registry."""
from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from filelock import FileLock

from . import augment as aug
from .datasets import DatasetIndex, holdout_val
from .evaluation import evaluate, write_metrics
from .metrics import MetricsReport
from .models import ModelSpec, build, load_checkpoint, swap_head
from .train import RunRecord, TrainConfig, fit, make_datasets

log = logging.getLogger(__name__)


class ChainError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainSpec:
    stages: tuple[str, ...]
    start: str = "imagenet"
    overrides: tuple[tuple[str, tuple], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if isinstance(self.overrides, dict):
            object.__setattr__(self, "overrides", tuple(
                (k, tuple(sorted(v.items()))) for k, v in sorted(self.overrides.items())))
        if self.start != "imagenet":
            raise ValueError("chains start from ImageNet weights")
        if not 1 <= len(self.stages) <= 3:
            raise ValueError(f"chains have 1-3 stages, got {len(self.stages)}")
        if len(set(self.stages)) != len(self.stages):
            raise ValueError(f"dataset repeated in chain {self.stages}")

    @property
    def target(self) -> str:
        return self.stages[-1]

    @property
    def sources(self) -> tuple[str, ...]:
        return self.stages[:-1]

    @property
    def signature(self) -> str:
        return ">".join((self.start,) + self.stages)

    @property
    def label(self) -> str:
        """Row label in the transfer table: the weights the target stage starts from."""
        return " → ".join(["Imagenet"] + [s.capitalize() for s in self.sources])

    def stage_overrides(self, dataset: str) -> dict:
        return dict(dict(self.overrides).get(dataset, ()))

    def to_dict(self) -> dict:
        d = {"start": self.start, "stages": [{"dataset": s} for s in self.stages]}
        for s in d["stages"]:
            ov = self.stage_overrides(s["dataset"])
            if ov:
                s["train"] = ov
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        stages, overrides = [], {}
        for s in d["stages"]:
            if isinstance(s, str):
                stages.append(s)
                continue
            stages.append(s["dataset"])
            if s.get("train"):
                overrides[s["dataset"]] = s["train"]
        return cls(tuple(stages), d.get("start", "imagenet"), overrides)


def enumerate_chains(targets, max_stages: int = 3) -> list[ChainSpec]:
    """All chains over distinct datasets, grouped by target, shortest first."""
    targets = list(dict.fromkeys(targets))
    if not 1 <= len(targets) <= 3:
        raise ValueError("need 1-3 distinct datasets")
    if max_stages not in (1, 2, 3):
        raise ValueError("max_stages must be 1, 2 or 3")
    chains = []
    for target in targets:
        others = [d for d in targets if d != target]
        for n_src in range(0, max_stages):
            for src in itertools.permutations(others, n_src):
                chains.append(ChainSpec(src + (target,)))
    return chains


class CheckpointRegistry:
    """Directory of checkpoints plus ``index.json`` mapping chain prefixes to files."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        self._lock = FileLock(str(self.index_path) + ".lock")

    def _read(self) -> dict:
        if self.index_path.exists():
            return json.loads(self.index_path.read_text())
        return {}

    def entries(self) -> dict:
        with self._lock:
            return self._read()

    def register(self, key: str, path, lineage: list, **meta) -> None:
        with self._lock:
            idx = self._read()
            idx[key] = {"path": str(path), "lineage": lineage, **meta}
            tmp = self.index_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(idx, indent=2, sort_keys=True))
            os.replace(tmp, self.index_path)

    def lookup(self, key: str) -> Optional[str]:
        entry = self.entries().get(key)
        if entry and Path(entry["path"]).exists():
            return entry["path"]
        return None

    def trace(self, key: str) -> list[str]:
        """Walk parent links back to the ``imagenet`` root."""
        idx = self.entries()
        chain = []
        while key != "imagenet":
            if key not in idx:
                raise KeyError(f"{key} not traceable to imagenet")
            chain.append(key)
            key = idx[key]["parent"]
        return chain[::-1]


@dataclass
class ChainResult:
    chain: ChainSpec
    final_checkpoint: str
    lineage: list
    stages: list  # RunRecord per stage
    metrics: Optional[MetricsReport] = None
    extra: dict = field(default_factory=dict)


def run_chain(chain: ChainSpec, registry: CheckpointRegistry, indices: dict[str, DatasetIndex],
              model_spec: ModelSpec, cfg: TrainConfig, run_root,
              policy: Optional[aug.AugmentPolicy] = None, target_eval: bool = True,
              reuse_intermediate: bool = False) -> ChainResult:
    """Train each stage from the previous stage's best checkpoint, swapping the head.

    Each stage validates on a holdout of its own train split. With
    ``reuse_intermediate`` a registered checkpoint for an identical chain
    prefix is reused instead of retrained.
    """
    missing = [d for d in chain.stages if d not in indices]
    if missing:
        raise ChainError(f"datasets not ingested: {missing}")
    run_root = Path(run_root)
    records: list[RunRecord] = []
    prev_ckpt, parent = None, "imagenet"
    for s, name in enumerate(chain.stages):
        index = indices[name]
        key = ">".join(("imagenet",) + chain.stages[: s + 1])
        stage_dir = run_root / f"stage{s}_{name}"
        cached = registry.lookup(key) if reuse_intermediate and s < len(chain.stages) - 1 else None
        if cached:
            log.info("reusing %s for %s", cached, key)
            prev_ckpt, parent = cached, key
            continue
        stage_cfg = cfg.override(**chain.stage_overrides(name)) if chain.stage_overrides(name) else cfg
        k = index.spec.landmark_count
        try:
            if prev_ckpt is None:
                model = build(model_spec.with_channels(k))
            else:
                model = swap_head(load_checkpoint(prev_ckpt), k, stage_cfg.seed + s)
            tr, va = holdout_val(index, stage_cfg.val_fraction, stage_cfg.seed)
            train_ds, val_ds = make_datasets(index, tr, va, stage_cfg, policy)
            stage = {"dataset": name, "stage": s, "landmarks": k, "parent": parent,
                     "head_swapped": prev_ckpt is not None}
            rec = fit(model, train_ds, val_ds, stage_cfg, stage_dir, lineage_stage=stage)
        except Exception as exc:
            raise ChainError(f"{chain.signature}: stage {s} ({name}) failed: {exc}") from exc
        rec.extra.update(dataset=name, parent_checkpoint=prev_ckpt)
        records.append(rec)
        registry.register(key, rec.best_checkpoint, [st["dataset"] for st in model.lineage],
                          parent=parent, run_id=rec.run_id)
        prev_ckpt, parent = rec.best_checkpoint, key

    final = load_checkpoint(prev_ckpt)
    result = ChainResult(chain, prev_ckpt, final.lineage, records)
    if target_eval:
        target = indices[chain.target]
        result.metrics = evaluate(final, target, decode_mode=cfg.decode_mode)
        write_metrics(run_root / "metrics.json", result.metrics, chain.target, checkpoint=prev_ckpt)
    return result
