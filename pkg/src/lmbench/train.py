"""Training loop, early stopping and k-fold cross-validation driver."""
from __future__ import annotations

import csv
import json
import logging
import random
import time
import uuid
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import cv2
import numpy as np
import torch
from PIL import Image
from torch.utils.data import DataLoader, Dataset

from . import augment as aug
from .core import ImageSpace, LandmarkSet, map_landmarks
from .datasets import AnnotatedImage, DatasetIndex, kfold_split
from .heatmap import encode
from .metrics import MetricsReport
from .models import HEAD_PREFIX, LandmarkNet, ModelSpec, body_digest, build, save_checkpoint

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class CrossValidationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    optimizer: str = "adam"
    lr_init: float = 1e-4
    batch_size: int = 2
    scheduler_factor: float = 0.1
    scheduler_patience: int = 10
    early_stop_patience: int = 20
    min_delta: float = 0.0
    loss: str = "mse"
    train_resolution: str = "512x512"
    sigma: float = 5.0
    seed: int = 0
    finetune_scope: str = "all-layers"
    val_fraction: float = 0.2
    decode_mode: str = "subpixel"
    cache_images: bool = False
    num_workers: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if not self.lr_init > 0:
            raise ValueError("lr_init must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.optimizer != "adam" or self.loss != "mse":
            raise ValueError("only adam + mse are supported")
        if self.finetune_scope != "all-layers":
            raise ValueError("every layer is fine-tuned; finetune_scope must be 'all-layers'")
        ImageSpace.parse(self.train_resolution)

    @property
    def resolution(self) -> ImageSpace:
        return ImageSpace.parse(self.train_resolution)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def override(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def load_gray(path) -> np.ndarray:
    """Image as float32 grayscale in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("F") if im.mode in ("I", "I;16", "F") else im.convert("L"),
                         dtype=np.float32)
    top = 255.0 if arr.max() <= 255 else float(arr.max())
    return arr / top


def resize_image(img: np.ndarray, space: ImageSpace) -> np.ndarray:
    if img.shape == space.shape:
        return img
    return cv2.resize(img, (space.width, space.height), interpolation=cv2.INTER_AREA)


class LandmarkDataset(Dataset):
    """Resize -> (optional) augment -> Gaussian targets, per training image."""

    def __init__(self, records: Sequence[AnnotatedImage], resolution: ImageSpace, sigma: float,
                 policy: Optional[aug.AugmentPolicy] = None, cache: bool = False):
        self.records = list(records)
        self.resolution = resolution
        self.sigma = sigma
        self.policy = policy
        self.epoch = 0
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def image(self, i: int) -> np.ndarray:
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        img = resize_image(load_gray(self.records[i].image_path), self.resolution)
        if self._cache is not None:
            self._cache[i] = img
        return img

    def sample(self, i: int):
        rec = self.records[i]
        img = self.image(i)
        lms = map_landmarks(rec.truth, rec.original_space, self.resolution)
        if self.policy is not None:
            rng = aug.rng_for(self.policy.seed, rec.id, self.epoch)
            img, lms = aug.apply(img, lms, self.policy, rng)
        return img, lms

    def __getitem__(self, i: int):
        img, lms = self.sample(i)
        hm = encode(lms, self.resolution, self.sigma)
        mask = (~hm.off_grid).astype(np.float32)
        return (torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))[None],
                torch.from_numpy(hm.values), torch.from_numpy(mask), i)


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """MSE over channels whose mask is 1 (off-grid landmarks are excluded)."""
    per_channel = ((pred - target) ** 2).mean(dim=(-2, -1))
    return (per_channel * mask).sum() / mask.sum().clamp_min(1.0)


class EarlyStopping:
    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.since_best = 0

    def step(self, value: float) -> bool:
        """Record an epoch's validation loss; True means stop."""
        if value < self.best - self.min_delta:
            self.best = value
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


@dataclass
class RunRecord:
    run_id: str
    config: dict
    seed: int
    curve: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    best_checkpoint: Optional[str] = None
    last_checkpoint: Optional[str] = None
    stopped_early: bool = False
    wall_clock: float = 0.0
    train_ids: list = field(default_factory=list)
    val_ids: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def seed_everything(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def make_scheduler(opt, cfg: TrainConfig):
    return torch.optim.lr_scheduler.ReduceLROnPlateau(opt, mode="min", factor=cfg.scheduler_factor,
                                                      patience=cfg.scheduler_patience)


def _loader(ds, cfg: TrainConfig, shuffle: bool, seed: int) -> DataLoader:
    gen = torch.Generator().manual_seed(seed)
    return DataLoader(ds, batch_size=cfg.batch_size, shuffle=shuffle, generator=gen,
                      num_workers=cfg.num_workers, drop_last=False)


@torch.no_grad()
def validation_loss(model, ds: LandmarkDataset, cfg: TrainConfig, device) -> float:
    model.eval()
    total, n = 0.0, 0
    for x, y, m, _ in _loader(ds, cfg, False, 0):
        out = model(x.to(device))
        total += masked_mse(out, y.to(device), m.to(device)).item() * len(x)
        n += len(x)
    return total / max(n, 1)


def fit(model: LandmarkNet, train_set: LandmarkDataset, val_set: LandmarkDataset, cfg: TrainConfig,
        run_dir=None, lineage_stage: Optional[dict] = None,
        on_epoch: Optional[Callable[[dict], None]] = None) -> RunRecord:
    """Adam + reduce-on-plateau + early stopping on validation loss.

    When ``run_dir`` is given, writes ``config.json``, ``curve.csv``,
    ``best.ckpt``, ``last.ckpt`` and ``log.txt`` there. On return the model
    holds the best-validation weights.
    """
    overlap = set(train_set.ids) & set(val_set.ids)
    if overlap:
        raise ValueError(f"validation overlaps training: {sorted(overlap)[:5]}")
    k = len(train_set.records[0].truth)
    if model.spec.out_channels != k:
        raise ValueError(f"model predicts {model.spec.out_channels} channels, dataset has K={k}")

    seed_everything(cfg.seed)
    device = resolve_device(cfg.device)
    model.to(device)
    run_dir = Path(run_dir) if run_dir is not None else None
    rec = RunRecord(run_id=run_dir.name if run_dir else uuid.uuid4().hex[:12], config=cfg.to_dict(),
                    seed=cfg.seed, train_ids=train_set.ids, val_ids=val_set.ids)
    rec.extra["init_body_digest"] = body_digest(model.state_dict())
    lineage = list(model.lineage) + ([lineage_stage] if lineage_stage else [])
    file_log = None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        file_log = logging.FileHandler(run_dir / "log.txt")
        log.addHandler(file_log)

    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_init)
    sched = make_scheduler(opt, cfg)
    stopper = EarlyStopping(cfg.early_stop_patience, cfg.min_delta)
    best_state = None
    t0 = time.time()
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            train_set.epoch = epoch
            total, n = 0.0, 0
            lr = opt.param_groups[0]["lr"]
            for x, y, m, idx in _loader(train_set, cfg, True, cfg.seed + epoch):
                x, y, m = x.to(device), y.to(device), m.to(device)
                loss = masked_mse(model(x), y, m)
                if not torch.isfinite(loss):
                    _dump_failure(run_dir, epoch, [train_set.ids[i] for i in idx.tolist()], lr, loss.item())
                    raise TrainingError(f"non-finite loss at epoch {epoch} (lr={lr}) on "
                                        f"{[train_set.ids[i] for i in idx.tolist()]}")
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                total += loss.item() * len(x)
                n += len(x)
            val = validation_loss(model, val_set, cfg, device)
            row = {"epoch": epoch, "train_loss": total / n, "val_loss": val, "lr": lr}
            rec.curve.append(row)
            log.info("epoch %d train %.6g val %.6g lr %.2g", epoch, row["train_loss"], val, lr)
            if on_epoch:
                on_epoch(row)
            if val < rec.best_val_loss:
                rec.best_val_loss, rec.best_epoch = val, epoch
                best_state = {kk: v.detach().cpu().clone() for kk, v in model.state_dict().items()}
                if run_dir:
                    rec.best_checkpoint = str(save_checkpoint(
                        run_dir / "best.ckpt", model, lineage, epoch=epoch, val_loss=val,
                        run_id=rec.run_id, seed=cfg.seed))
            sched.step(val)
            if stopper.step(val):
                rec.stopped_early = epoch < cfg.epochs
                log.info("early stop at epoch %d (best %d)", epoch, rec.best_epoch)
                break
        if run_dir:
            rec.last_checkpoint = str(save_checkpoint(run_dir / "last.ckpt", model, lineage,
                                                      run_id=rec.run_id, seed=cfg.seed))
            _write_curve(run_dir / "curve.csv", rec.curve)
    finally:
        if file_log:
            log.removeHandler(file_log)
            file_log.close()
    if best_state is not None:
        model.load_state_dict(best_state)
    model.lineage = lineage
    rec.wall_clock = time.time() - t0
    if run_dir:
        (run_dir / "record.json").write_text(json.dumps(rec.to_dict(), indent=2, default=str))
    return rec


def _write_curve(path: Path, curve: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "lr"])
        w.writeheader()
        w.writerows(curve)


def _dump_failure(run_dir, epoch, ids, lr, loss) -> None:
    if run_dir is None:
        return
    Path(run_dir).mkdir(parents=True, exist_ok=True)
    (Path(run_dir) / "diagnostic.json").write_text(
        json.dumps({"epoch": epoch, "batch_ids": ids, "lr": lr, "loss": str(loss)}, indent=2))


def gradient_check(model: LandmarkNet, x: torch.Tensor, target: torch.Tensor, n_params: int = 5,
                   eps: float = 1e-6, seed: int = 0) -> list[dict]:
    """Compare autograd against central differences on random final-layer weights.

    Runs in float64 on a copy of the model. Returns one dict per sampled
    parameter with both gradients and their relative error.
    """
    import copy

    m = copy.deepcopy(model).double().eval()
    x, target = x.double(), target.double()
    mask = torch.ones(target.shape[:2], dtype=torch.float64)
    weight = m.head.weight
    m.zero_grad()
    masked_mse(m(x), target, mask).backward()
    analytic = weight.grad.detach().clone()
    gen = np.random.default_rng(seed)
    flat_idx = gen.choice(weight.numel(), size=n_params, replace=False)
    out = []
    with torch.no_grad():
        for fi in flat_idx:
            idx = np.unravel_index(int(fi), tuple(weight.shape))
            orig = weight[idx].item()
            weight[idx] = orig + eps
            plus = masked_mse(m(x), target, mask).item()
            weight[idx] = orig - eps
            minus = masked_mse(m(x), target, mask).item()
            weight[idx] = orig
            numeric = (plus - minus) / (2 * eps)
            a = analytic[idx].item()
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            out.append({"name": HEAD_PREFIX + "weight", "index": tuple(int(i) for i in idx), "analytic": a, "numeric": numeric,
                        "rel_error": rel})
    return out


def make_datasets(index: DatasetIndex, train_ids, val_ids, cfg: TrainConfig,
                  policy: Optional[aug.AugmentPolicy]):
    """Augmented training set plus clean validation set; refuses test images."""
    index.assert_no_test_leak(train_ids, val_ids)
    res = cfg.resolution
    return (LandmarkDataset(index.select(train_ids), res, cfg.sigma, policy, cfg.cache_images),
            LandmarkDataset(index.select(val_ids), res, cfg.sigma, None, cfg.cache_images))


@dataclass
class CrossValResult:
    report: MetricsReport
    folds: list  # per-fold MetricsReport
    runs: list  # per-fold RunRecord


def crossval(index: DatasetIndex, spec: ModelSpec, cfg: TrainConfig, folds: int = 5,
             policy: Optional[aug.AugmentPolicy] = None, run_dir=None,
             model_factory: Callable[[ModelSpec], LandmarkNet] = build) -> CrossValResult:
    """Train one model per fold and aggregate validation metrics (mean, population std).

    The fold's validation partition drives early stopping and is the set the
    fold's metrics are computed on. Any failing fold fails the whole run.
    """
    from .evaluation import evaluate

    spec = spec.with_channels(index.spec.landmark_count)
    splits = kfold_split(index, folds, cfg.seed)
    reports, runs = [], []
    for k, (tr, va) in enumerate(splits):
        fold_cfg = cfg.override(seed=cfg.seed + k)
        try:
            train_ds, val_ds = make_datasets(index, tr, va, fold_cfg, policy)
            model = model_factory(spec)
            fold_dir = Path(run_dir) / f"fold{k}" if run_dir else None
            rec = fit(model, train_ds, val_ds, fold_cfg, fold_dir,
                      lineage_stage={"dataset": index.name, "fold": k})
            rep = evaluate(model, index, ids=va, decode_mode=cfg.decode_mode)
        except Exception as exc:
            raise CrossValidationError(f"fold {k} failed: {exc}") from exc
        rec.extra["metrics"] = rep.to_dict()
        reports.append(rep)
        runs.append(rec)
        log.info("fold %d: MRE %.4f %s", k, rep.mre, rep.unit)
    return CrossValResult(MetricsReport.aggregate(reports), reports, runs)
