"""Benchmark dataset contracts, ingestion and split protocol."""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .core import ImageSpace, LandmarkSet
from .metrics import SpacingModel

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
TRAIN, TEST = "train", "test"


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    landmark_count: int
    train_count: int
    test_count: int
    test_resolution: ImageSpace
    spacing_model: SpacingModel
    sdr_thresholds: tuple[float, ...]
    train_resolution: ImageSpace = ImageSpace(512, 512)
    expected_space: Optional[ImageSpace] = None

    @property
    def metric_unit(self) -> str:
        return self.spacing_model.unit

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "landmark_count": self.landmark_count,
            "train_count": self.train_count,
            "test_count": self.test_count,
            "train_resolution": str(self.train_resolution),
            "test_resolution": str(self.test_resolution),
            "spacing_model": self.spacing_model.to_dict(),
            "sdr_thresholds": list(self.sdr_thresholds),
            "metric_unit": self.metric_unit,
        }
        if self.expected_space is not None:
            d["expected_space"] = str(self.expected_space)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(
            name=d["name"],
            landmark_count=int(d["landmark_count"]),
            train_count=int(d["train_count"]),
            test_count=int(d["test_count"]),
            train_resolution=ImageSpace.parse(d.get("train_resolution", "512x512")),
            test_resolution=ImageSpace.parse(d["test_resolution"]),
            spacing_model=SpacingModel.from_dict(d["spacing_model"]),
            sdr_thresholds=tuple(float(t) for t in d["sdr_thresholds"]),
            expected_space=ImageSpace.parse(d["expected_space"]) if d.get("expected_space") else None,
        )


# Resolutions are width x height. Head and hand images are portrait, so their
# test grids keep height 512 and shrink the width to preserve aspect ratio.
CHEST = DatasetSpec("chest", 6, 229, 50, ImageSpace(512, 512), SpacingModel.pixel(), (3.0, 6.0, 9.0))
HEAD = DatasetSpec("head", 19, 150, 250, ImageSpace(416, 512), SpacingModel.fixed(0.1),
                   (2.0, 2.5, 3.0, 4.0), expected_space=ImageSpace(1935, 2400))
HAND = DatasetSpec("hand", 37, 609, 300, ImageSpace(368, 512), SpacingModel.wrist(0, 4),
                   (2.0, 4.0, 10.0))
SPECS = {s.name: s for s in (CHEST, HEAD, HAND)}


def get_spec(name: str) -> DatasetSpec:
    try:
        return SPECS[name]
    except KeyError:
        raise KeyError(f"unknown dataset {name!r}; known: {sorted(SPECS)}") from None


@dataclass(frozen=True)
class AnnotatedImage:
    id: str
    image_path: str
    original_space: ImageSpace
    truth: LandmarkSet
    split: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "width": self.original_space.width,
            "height": self.original_space.height,
            "landmarks": self.truth.flat(),
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotatedImage":
        space = ImageSpace(d["width"], d["height"])
        return cls(d["id"], d["image_path"], space, LandmarkSet.from_flat(d["landmarks"], space),
                   d["split"])


@dataclass(frozen=True)
class DatasetIndex:
    spec: DatasetSpec
    records: tuple[AnnotatedImage, ...]
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "_by_id", {r.id: r for r in self.records})
        if len(self._by_id) != len(self.records):
            raise IngestError("duplicate image ids in index")

    def __len__(self):
        return len(self.records)

    def __getitem__(self, image_id: str) -> AnnotatedImage:
        return self._by_id[image_id]

    @property
    def name(self) -> str:
        return self.spec.name

    def split_ids(self, split: str) -> list[str]:
        return [r.id for r in self.records if r.split == split]

    @property
    def train_ids(self) -> list[str]:
        return self.split_ids(TRAIN)

    @property
    def test_ids(self) -> list[str]:
        return self.split_ids(TEST)

    def select(self, ids) -> list[AnnotatedImage]:
        return [self._by_id[i] for i in ids]

    def assert_no_test_leak(self, *id_groups) -> None:
        """Raise if any of the given id collections touches the test split."""
        test = set(self.test_ids)
        for ids in id_groups:
            leaked = test.intersection(ids)
            if leaked:
                raise AssertionError(f"test images in a training/validation set: {sorted(leaked)[:5]}")

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "records": [r.to_dict() for r in self.records]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        os.replace(tmp, path)
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetIndex":
        return cls(DatasetSpec.from_dict(d["spec"]), [AnnotatedImage.from_dict(r) for r in d["records"]])

    @classmethod
    def load(cls, path) -> "DatasetIndex":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def read_annotations(path) -> dict[str, list[float]]:
    """Parse ``annotations.csv``: header ``id,x1,y1,...`` then one row per image."""
    rows: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "id":
            raise IngestError(f"{path}: first header column must be 'id'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            image_id = row[0].strip()
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno} ({image_id}): bad number: {exc}") from None
            if image_id in rows:
                raise IngestError(f"{path}:{lineno}: duplicate id {image_id}")
            rows[image_id] = values
    return rows


def list_images(root) -> list[Path]:
    img_dir = Path(root) / "images"
    if not img_dir.is_dir():
        return []
    return sorted((p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
                  key=lambda p: p.name)


def ingest(root, spec: DatasetSpec, check_counts: bool = True) -> DatasetIndex:
    """Index ``root`` under ``spec``: first ``train_count`` files (lexicographic) train, rest test."""
    root = Path(root)
    images = list_images(root)
    if not images:
        raise IngestError(f"no images found under {root / 'images'}")
    ann_path = root / "annotations.csv"
    if not ann_path.is_file():
        raise IngestError(f"missing annotation table {ann_path}")
    ann = read_annotations(ann_path)

    ids = [p.stem for p in images]
    missing = [i for i in ids if i not in ann]
    if missing:
        raise IngestError(f"{len(missing)} image(s) without annotation: {', '.join(missing)}")
    orphans = sorted(set(ann) - set(ids))
    if orphans:
        log.warning("%d annotation row(s) without image: %s", len(orphans), ", ".join(orphans[:10]))
    bad_k = [i for i in ids if len(ann[i]) != 2 * spec.landmark_count]
    if bad_k:
        raise IngestError(f"expected {2 * spec.landmark_count} coordinates (K={spec.landmark_count}) "
                          f"for: {', '.join(bad_k)}")
    expected = spec.train_count + spec.test_count
    if check_counts and len(ids) != expected:
        raise IngestError(f"{spec.name}: found {len(ids)} images, protocol needs {expected}")

    records = []
    for pos, (path, image_id) in enumerate(zip(images, ids)):
        with Image.open(path) as im:
            space = ImageSpace(*im.size)
        if spec.expected_space is not None and space != spec.expected_space:
            log.warning("%s: size %s differs from expected %s", image_id, space, spec.expected_space)
        truth = LandmarkSet.from_flat(ann[image_id], space)
        oob = np.flatnonzero(truth.out_of_bounds())
        if oob.size:
            log.warning("%s: landmarks %s outside the image", image_id, oob.tolist())
        split = TRAIN if pos < spec.train_count else TEST
        records.append(AnnotatedImage(image_id, str(path.resolve()), space, truth, split))
    return DatasetIndex(spec, records)


def kfold_split(index: DatasetIndex, folds: int, seed: int) -> list[tuple[list[str], list[str]]]:
    """Shuffle the train split with ``seed`` and cut it into ``folds`` near-equal parts."""
    ids = index.train_ids
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > len(ids):
        raise ValueError(f"{folds} folds for {len(ids)} training images")
    order = np.random.default_rng(seed).permutation(len(ids))
    parts = np.array_split(order, folds)
    out = []
    for part in parts:
        val = set(part.tolist())
        out.append(([i for k, i in enumerate(ids) if k not in val],
                    [i for k, i in enumerate(ids) if k in val]))
    return out


def holdout_val(index: DatasetIndex, fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Deterministic ``floor(n * fraction)`` validation holdout from the train split."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    ids = index.train_ids
    n_val = int(np.floor(len(ids) * fraction))
    if n_val == 0 or n_val == len(ids):
        raise ValueError(f"holdout of {fraction} on {len(ids)} images leaves an empty partition")
    order = np.random.default_rng(seed).permutation(len(ids))
    val = set(order[:n_val].tolist())
    return ([i for k, i in enumerate(ids) if k not in val], [i for k, i in enumerate(ids) if k in val])
