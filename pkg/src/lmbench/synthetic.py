"""Small synthetic corpora in the on-disk layout ``ingest`` expects.

Each landmark is rendered as a bright disc at a jittered template position so
that a network can actually learn to find it.
"""
from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .core import ImageSpace
from .datasets import SPECS, DatasetSpec


def synthetic_spec(like: str, n_train: int, n_test: int, size: int = 64,
                   landmarks: int | None = None) -> DatasetSpec:
    """Scaled-down copy of a benchmark spec (same spacing rule and thresholds)."""
    base = SPECS[like]
    space = ImageSpace(size, size)
    return replace(base, name=like, landmark_count=landmarks or base.landmark_count,
                   train_count=n_train, test_count=n_test, train_resolution=space,
                   test_resolution=space, expected_space=None)


def render(points: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    img = 0.15 + 0.1 * (xx + yy) / (2 * size) + rng.normal(0, 0.02, (size, size))
    for k, (x, y) in enumerate(points):
        radius = 2.5 + (k % 2)
        level = 0.6 + 0.4 * ((k * 3) % 5) / 4
        img[(xx - x) ** 2 + (yy - y) ** 2 <= radius ** 2] = level
    img = cv2.GaussianBlur(img.astype(np.float32), (3, 3), 0.6)
    return np.clip(img, 0, 1)


def make_dataset(root, spec: DatasetSpec, seed: int = 0, jitter: float = 0.06) -> Path:
    """Write ``images/*.png`` and ``annotations.csv`` for ``spec`` under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    size = spec.test_resolution.width
    k = spec.landmark_count
    rng = np.random.default_rng(seed)
    template = rng.uniform(0.15, 0.85, (k, 2)) * (size - 1)
    n = spec.train_count + spec.test_count
    header = ["id"] + [f"{a}{i}" for i in range(1, k + 1) for a in ("x", "y")]
    rows = []
    for i in range(n):
        pts = template + rng.uniform(-jitter, jitter, (k, 2)) * size
        pts = np.clip(pts, 2, size - 3)
        image_id = f"{i:04d}"
        img = render(pts, size, rng)
        Image.fromarray((img * 255).round().astype(np.uint8)).save(root / "images" / f"{image_id}.png")
        rows.append([image_id] + [f"{v:.3f}" for v in pts.reshape(-1)])
    with open(root / "annotations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return root


def make_family(root, n_train: int = 6, n_test: int = 3, size: int = 64, seed: int = 0,
                landmarks: dict | None = None) -> dict[str, tuple[Path, DatasetSpec]]:
    """One synthetic corpus per benchmark name: ``{name: (root, spec)}``."""
    out = {}
    for j, name in enumerate(("chest", "head", "hand")):
        spec = synthetic_spec(name, n_train, n_test, size, (landmarks or {}).get(name))
        out[name] = (make_dataset(Path(root) / name, spec, seed + j), spec)
    return out
