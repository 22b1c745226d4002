"""Mean radial error and success detection rate under per-dataset spacing rules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, LandmarkSet, radial_distances

PIXEL = "pixel"
FIXED = "fixed_mm_per_px"
WRIST = "wrist_width"


@dataclass(frozen=True)
class SpacingModel:
    kind: str = PIXEL
    mm_per_px: Optional[float] = None
    wrist_indices: Optional[tuple[int, int]] = None
    wrist_width_mm: float = 50.0

    def __post_init__(self):
        if self.kind not in (PIXEL, FIXED, WRIST):
            raise ValueError(f"unknown spacing kind {self.kind!r}")
        if self.kind == FIXED and not (self.mm_per_px and self.mm_per_px > 0):
            raise ValueError("fixed spacing needs a positive mm_per_px")
        if self.kind == WRIST:
            if self.wrist_indices is None or len(self.wrist_indices) != 2:
                raise ValueError("wrist spacing needs two landmark indices")
            if self.wrist_width_mm <= 0:
                raise ValueError("wrist width must be positive")
            object.__setattr__(self, "wrist_indices", tuple(int(i) for i in self.wrist_indices))

    @property
    def unit(self) -> str:
        return "px" if self.kind == PIXEL else "mm"

    @classmethod
    def pixel(cls):
        return cls(PIXEL)

    @classmethod
    def fixed(cls, mm_per_px: float):
        return cls(FIXED, mm_per_px=mm_per_px)

    @classmethod
    def wrist(cls, first: int = 0, fifth: int = 4, width_mm: float = 50.0):
        return cls(WRIST, wrist_indices=(first, fifth), wrist_width_mm=width_mm)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.mm_per_px is not None:
            d["mm_per_px"] = self.mm_per_px
        if self.wrist_indices is not None:
            d["wrist_indices"] = list(self.wrist_indices)
            d["wrist_width_mm"] = self.wrist_width_mm
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpacingModel":
        d = dict(d)
        if "wrist_indices" in d:
            d["wrist_indices"] = tuple(d["wrist_indices"])
        return cls(**d)


def spacing_factor(truth: LandmarkSet, model: SpacingModel) -> float:
    """Pixel-to-unit multiplier for one image.

    For the wrist model the endpoints always come from the ground truth so the
    unit does not depend on prediction quality.
    """
    if model.kind == PIXEL:
        return 1.0
    if model.kind == FIXED:
        return float(model.mm_per_px)
    i, j = model.wrist_indices
    if max(i, j) >= len(truth):
        raise ContractError(f"wrist indices {model.wrist_indices} invalid for K={len(truth)}")
    (px, py), (qx, qy) = truth.points[i], truth.points[j]
    width_px = math.hypot(px - qx, py - qy)
    if width_px == 0:
        raise ContractError("wrist endpoints coincide; spacing factor undefined")
    return model.wrist_width_mm / width_px


def unit_distances(pred: Sequence[LandmarkSet], truth: Sequence[LandmarkSet],
                   model: SpacingModel) -> np.ndarray:
    """Pooled per-landmark radial errors of all images, in the model's unit."""
    if len(pred) != len(truth):
        raise ContractError(f"{len(pred)} predictions for {len(truth)} ground truths")
    if len(truth) == 0:
        raise ContractError("no images to evaluate")
    parts = [radial_distances(p, t) * spacing_factor(t, model) for p, t in zip(pred, truth)]
    return np.concatenate(parts)


def mre(pred, truth, model: SpacingModel) -> float:
    return float(np.mean(unit_distances(pred, truth, model)))


def sdr_from_distances(d: np.ndarray, thresholds) -> dict[float, float]:
    if d.size == 0:
        raise ContractError("no distances")
    out = {}
    for t in thresholds:
        if not t > 0:
            raise ContractError(f"threshold must be positive, got {t}")
        out[float(t)] = 100.0 * np.count_nonzero(d <= t) / d.size
    return out


def sdr(pred, truth, model: SpacingModel, thresholds) -> dict[float, float]:
    """Percentage of pooled landmarks with error ``<= t`` for each threshold."""
    return sdr_from_distances(unit_distances(pred, truth, model), thresholds)


def threshold_label(t: float, unit: str) -> str:
    return f"{t:g}{unit}"


@dataclass
class MetricsReport:
    mre: float
    sdr: dict[float, float]
    unit: str
    n_images: int
    n_landmarks: int
    mre_std: Optional[float] = None
    sdr_std: Optional[dict[float, float]] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_distances(cls, d: np.ndarray, thresholds, unit: str, n_images: int):
        return cls(mre=float(np.mean(d)), sdr=sdr_from_distances(d, thresholds), unit=unit,
                   n_images=n_images, n_landmarks=int(d.size))

    @classmethod
    def aggregate(cls, reports: Sequence["MetricsReport"]) -> "MetricsReport":
        """Mean and population std across folds."""
        if not reports:
            raise ContractError("nothing to aggregate")
        units = {r.unit for r in reports}
        if len(units) != 1:
            raise ContractError(f"mixed units {units}")
        mres = np.array([r.mre for r in reports])
        sdr_mean, sdr_std = {}, {}
        for t in reports[0].sdr:
            vals = np.array([r.sdr[t] for r in reports])
            sdr_mean[t] = float(vals.mean())
            sdr_std[t] = float(vals.std())
        return cls(mre=float(mres.mean()), mre_std=float(mres.std()), sdr=sdr_mean,
                   sdr_std=sdr_std, unit=units.pop(),
                   n_images=sum(r.n_images for r in reports),
                   n_landmarks=sum(r.n_landmarks for r in reports),
                   extra={"folds": len(reports)})

    def to_dict(self) -> dict:
        d = {
            "unit": self.unit,
            "mre": self.mre,
            "sdr": {threshold_label(t, self.unit): v for t, v in self.sdr.items()},
            "n_images": self.n_images,
            "n_landmarks": self.n_landmarks,
        }
        if self.mre_std is not None:
            d["mre_std"] = self.mre_std
        if self.sdr_std is not None:
            d["sdr_std"] = {threshold_label(t, self.unit): v for t, v in self.sdr_std.items()}
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        unit = d["unit"]

        def parse(m):
            return {float(k[: -len(unit)]): float(v) for k, v in m.items()}

        known = {"unit", "mre", "sdr", "n_images", "n_landmarks", "mre_std", "sdr_std"}
        return cls(mre=float(d["mre"]), sdr=parse(d["sdr"]), unit=unit,
                   n_images=int(d["n_images"]), n_landmarks=int(d["n_landmarks"]),
                   mre_std=d.get("mre_std"),
                   sdr_std=parse(d["sdr_std"]) if d.get("sdr_std") else None,
                   extra={k: v for k, v in d.items() if k not in known})
