"""``lmbench`` command line: prepare, train, chain, crossval, eval, report.

Exit codes: 0 ok, 2 validation error, 3 training failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

from . import report as reporting
from .config import ExperimentConfig, load_config, save_config
from .core import ContractError
from .datasets import DatasetIndex, DatasetSpec, IngestError, get_spec, holdout_val, ingest
from .evaluation import evaluate, write_metrics
from .models import CapabilityError, CheckpointLoadError, WeightsUnavailableError, build, table1_grid
from .models import ModelSpec
from .store import DuplicateRunError, ResultsStore
from .train import CrossValidationError, TrainingError, crossval, fit, make_datasets, seed_everything
from .transfer import ChainError, ChainSpec, CheckpointRegistry, enumerate_chains, run_chain

log = logging.getLogger("lmbench")

EXIT_OK, EXIT_INVALID, EXIT_TRAINING = 0, 2, 3


class RerunRefused(ValueError):
    pass


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str))


def load_index(cfg: ExperimentConfig, name: str) -> DatasetIndex:
    src = cfg.dataset_source(name)
    if "index" in src:
        return DatasetIndex.load(src["index"])
    spec = DatasetSpec.from_dict(src["spec"]) if "spec" in src else get_spec(name)
    return ingest(src["root"], spec)


class Session:
    """Shared state of one command: config, output dir, results store."""

    def __init__(self, cfg: ExperimentConfig, command: str, force: bool = False):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.output_dir)
        self.store = ResultsStore(self.out / "results.jsonl")
        self.hash = cfg.hash
        if self.store.has_config(command, self.hash) and not force:
            raise RerunRefused(f"{command} with config {self.hash} already ran; use --force to rerun")
        self.stamp = "" if not self.store.has_config(command, self.hash) else time.strftime("-%Y%m%d%H%M%S")

    def run_id(self, suffix: str = "") -> str:
        parts = [self.command, self.hash[:10]] + ([suffix] if suffix else [])
        return "-".join(parts) + self.stamp

    def run_dir(self, run_id: str) -> Path:
        d = self.out / "runs" / run_id
        d.mkdir(parents=True, exist_ok=True)
        save_config(self.cfg, d / "experiment.json")
        return d

    def record(self, run_id: str, dataset: Optional[str], metrics: Optional[dict], **extra) -> dict:
        return self.store.append(run_id, self.command, self.hash, dataset, metrics, **extra)


def _target(cfg: ExperimentConfig) -> str:
    if cfg.target:
        return cfg.target
    if len(cfg.datasets) == 1:
        return next(iter(cfg.datasets))
    raise ValueError("config needs 'target' when several datasets are listed")


def cmd_prepare(root, dataset: str, out=None, spec_path=None) -> Path:
    spec = DatasetSpec.from_dict(json.loads(Path(spec_path).read_text())) if spec_path else get_spec(dataset)
    index = ingest(root, spec)
    out = Path(out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = index.save(out / f"{spec.name}.index.json")
    print(f"{spec.name}: {len(index.train_ids)} train / {len(index.test_ids)} test -> {path}")
    return path


def cmd_train(cfg: ExperimentConfig, force: bool = False) -> dict:
    s = Session(cfg, "train", force)
    name = _target(cfg)
    index = load_index(cfg, name)
    run_id = s.run_id(name)
    run_dir = s.run_dir(run_id)
    tr, va = holdout_val(index, cfg.train.val_fraction, cfg.seed)
    _write_json(run_dir / "splits.json", {"train": tr, "val": va, "test": index.test_ids})
    train_ds, val_ds = make_datasets(index, tr, va, cfg.train, cfg.augment)
    seed_everything(cfg.seed)
    model = build(cfg.model.with_channels(index.spec.landmark_count))
    rec = fit(model, train_ds, val_ds, cfg.train, run_dir, lineage_stage={"dataset": name, "stage": 0})
    rep = evaluate(model, index, decode_mode=cfg.train.decode_mode)
    write_metrics(run_dir / "metrics.json", rep, name, rec.best_checkpoint, s.hash)
    return s.record(run_id, name, rep.to_dict(), chain=f"imagenet>{name}", model=cfg.model.to_dict(),
                    checkpoint=rec.best_checkpoint)


def chains_for(cfg: ExperimentConfig) -> list[ChainSpec]:
    if cfg.chain:
        return [ChainSpec.from_dict(cfg.chain)]
    if cfg.chains:
        return enumerate_chains(cfg.chains.get("targets", list(cfg.datasets)), cfg.chains.get("max_stages", 3))
    raise ValueError("config needs 'chain' or 'chains'")


def cmd_chain(cfg: ExperimentConfig, force: bool = False) -> list[dict]:
    s = Session(cfg, "chain", force)
    chains = chains_for(cfg)
    needed = sorted({d for ch in chains for d in ch.stages})
    indices = {n: load_index(cfg, n) for n in needed}
    registry = CheckpointRegistry(s.out / "registry")
    reuse = bool((cfg.chains or {}).get("reuse_intermediate", False))
    rows = []
    for ch in chains:
        run_id = s.run_id(ch.signature.replace(">", "-"))
        run_dir = s.run_dir(run_id)
        seed_everything(cfg.seed)
        res = run_chain(ch, registry, indices, cfg.model, cfg.train, run_dir, cfg.augment,
                        reuse_intermediate=reuse)
        _write_json(run_dir / "splits.json", {
            "stages": [{"dataset": r.extra["dataset"], "train": r.train_ids, "val": r.val_ids}
                       for r in res.stages],
            "test": indices[ch.target].test_ids})
        rows.append(s.record(run_id, ch.target, res.metrics.to_dict() if res.metrics else None,
                             chain=ch.signature, model=cfg.model.to_dict(),
                             checkpoint=res.final_checkpoint, lineage=[st["dataset"] for st in res.lineage]))
        print(f"{ch.signature}: MRE {res.metrics.mre:.3f} {res.metrics.unit}" if res.metrics else ch.signature)
    return rows


def grid_for(cfg: ExperimentConfig) -> list[ModelSpec]:
    if cfg.grid == "table1":
        return table1_grid(pretrained=cfg.model.pretrained)
    if isinstance(cfg.grid, list):
        return [ModelSpec.from_dict({"pretrained": cfg.model.pretrained, **g}) for g in cfg.grid]
    return [cfg.model]


def cmd_crossval(cfg: ExperimentConfig, force: bool = False) -> list[dict]:
    s = Session(cfg, "crossval", force)
    name = _target(cfg)
    index = load_index(cfg, name)
    rows = []
    for spec in grid_for(cfg):
        run_id = s.run_id(f"{name}-{spec.architecture}-{spec.encoder}")
        run_dir = s.run_dir(run_id)
        seed_everything(cfg.seed)
        res = crossval(index, spec, cfg.train, cfg.folds, cfg.augment, run_dir)
        for k, r in enumerate(res.runs):
            _write_json(run_dir / f"fold{k}" / "splits.json",
                        {"train": r.train_ids, "val": r.val_ids, "test": index.test_ids})
        metrics = res.report.to_dict()
        metrics["per_fold"] = [f.to_dict() for f in res.folds]
        _write_json(run_dir / "metrics.json", metrics)
        rows.append(s.record(run_id, name, metrics, model=spec.to_dict()))
        print(f"{spec.architecture}/{spec.encoder}: MRE {res.report.mre:.3f} ± {res.report.mre_std:.3f} "
              f"{res.report.unit}")
    return rows


def cmd_eval(cfg: ExperimentConfig, force: bool = False) -> dict:
    if not cfg.checkpoint:
        raise ValueError("eval needs 'checkpoint' in the config")
    s = Session(cfg, "eval", force)
    name = _target(cfg)
    index = load_index(cfg, name)
    run_id = s.run_id(name)
    run_dir = s.run_dir(run_id)
    rep = evaluate(cfg.checkpoint, index, decode_mode=cfg.train.decode_mode)
    write_metrics(run_dir / "metrics.json", rep, name, cfg.checkpoint, s.hash)
    return s.record(run_id, name, rep.to_dict(), checkpoint=cfg.checkpoint)


def cmd_report(store_path, template: str, out=None, with_plot: bool = True) -> dict:
    store = ResultsStore(store_path)
    rows = store.rows()
    res = reporting.write_report(rows, template, out or Path(store_path).parent / "reports", with_plot)
    print(res["markdown"])
    return res


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (.json/.yaml)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--force", action="store_true", help="rerun even if this config already ran")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lmbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    prep = sub.add_parser("prepare", parents=[common], help="ingest and validate a dataset root")
    prep.add_argument("root")
    prep.add_argument("--dataset", required=True)
    prep.add_argument("--spec", default=None, help="JSON DatasetSpec overriding the built-in one")
    for name, text in [("train", "train one model on the target dataset"),
                       ("chain", "run fine-tuning chain(s)"),
                       ("crossval", "k-fold cross-validation over a model grid"),
                       ("eval", "evaluate a checkpoint on a test split")]:
        sub.add_parser(name, parents=[common], help=text)
    rep = sub.add_parser("report", parents=[common], help="render a table from the results store")
    rep.add_argument("--store", required=True)
    rep.add_argument("--template", choices=sorted(reporting.TEMPLATES), required=True)
    rep.add_argument("--no-plot", action="store_true")
    return p


COMMANDS = {"train": cmd_train, "chain": cmd_chain, "crossval": cmd_crossval, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command == "prepare":
            cmd_prepare(args.root, args.dataset, args.out, args.spec)
        elif args.command == "report":
            cmd_report(args.store, args.template, args.out, not args.no_plot)
        else:
            if not args.config:
                raise ValueError(f"{args.command} needs --config")
            cfg = load_config(args.config).with_overrides(args.seed, args.out)
            COMMANDS[args.command](cfg, args.force)
    except (TrainingError, ChainError, CrossValidationError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (IngestError, ContractError, CapabilityError, CheckpointLoadError, WeightsUnavailableError,
            RerunRefused, DuplicateRunError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
