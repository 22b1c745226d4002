"""Checkpoint -> predictions in original image space -> MetricsReport."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch

from .core import ContractError, ImageSpace, LandmarkSet, map_landmarks, radial_distances
from .datasets import TEST, AnnotatedImage, DatasetIndex
from .heatmap import decode_array
from .metrics import MetricsReport, spacing_factor
from .models import Checkpoint, LandmarkNet, checkpoint_model, load_checkpoint
from .train import load_gray, resize_image

ORIGINAL, NETWORK = "original", "network"


@torch.no_grad()
def predict(model: LandmarkNet, records: Sequence[AnnotatedImage], resolution: ImageSpace,
            decode_mode: str = "subpixel", batch_size: int = 2, device="cpu") -> list[LandmarkSet]:
    """Predicted landmarks for each record, mapped back to its original space."""
    model.eval().to(device)
    out = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        x = np.stack([resize_image(load_gray(r.image_path), resolution) for r in chunk])
        heat = model(torch.from_numpy(x)[:, None].to(device)).cpu().numpy()
        for r, h in zip(chunk, heat):
            lms = decode_array(h, resolution, decode_mode)
            out.append(map_landmarks(lms, resolution, r.original_space))
    return out


def score(preds: Sequence[LandmarkSet], records: Sequence[AnnotatedImage], index: DatasetIndex,
          metric_space: str = ORIGINAL) -> MetricsReport:
    """Pool unit-converted radial errors over all landmarks of all images.

    ``metric_space='network'`` measures pixel distances at the test resolution
    instead of the original image size (both are reported for chest).
    """
    spec = index.spec
    if metric_space not in (ORIGINAL, NETWORK):
        raise ValueError(f"metric_space must be {ORIGINAL!r} or {NETWORK!r}")
    if not records:
        raise ContractError("nothing to evaluate")
    parts = []
    for p, r in zip(preds, records, strict=True):
        truth = r.truth
        if len(p) != len(truth):
            raise ContractError(f"{r.id}: K={len(p)} predicted, K={len(truth)} annotated")
        factor = spacing_factor(truth, spec.spacing_model)
        if metric_space == NETWORK:
            p = map_landmarks(p, r.original_space, spec.test_resolution)
            truth = map_landmarks(truth, r.original_space, spec.test_resolution)
            if spec.spacing_model.kind != "pixel":
                raise ContractError("network-space metrics are only defined for pixel spacing")
        parts.append(radial_distances(p, truth) * factor)
    d = np.concatenate(parts)
    return MetricsReport.from_distances(d, spec.sdr_thresholds, spec.metric_unit, len(records))


def evaluate(model: Union[LandmarkNet, Checkpoint, str, Path, Callable], index: DatasetIndex,
             split: str = TEST, ids: Optional[Sequence[str]] = None, decode_mode: str = "subpixel",
             metric_space: str = ORIGINAL, device="cpu") -> MetricsReport:
    """Deterministic evaluation of a model on one split (or explicit ids).

    ``model`` may also be a plain callable ``record -> LandmarkSet`` in the
    record's original space, which bypasses the network.
    """
    records = index.select(ids) if ids is not None else index.select(index.split_ids(split))
    if isinstance(model, (str, Path)):
        model = load_checkpoint(model)
    if isinstance(model, Checkpoint):
        model = checkpoint_model(model)
    if isinstance(model, LandmarkNet):
        if model.spec.out_channels != index.spec.landmark_count:
            raise ContractError(f"model K={model.spec.out_channels} vs dataset K={index.spec.landmark_count}")
        preds = predict(model, records, index.spec.test_resolution, decode_mode, device=device)
    else:
        preds = [model(r) for r in records]
    rep = score(preds, records, index, metric_space)
    rep.extra.update({"dataset": index.name, "split": split if ids is None else "ids",
                      "metric_space": metric_space})
    if index.spec.spacing_model.kind == "pixel" and metric_space == ORIGINAL:
        alt = score(preds, records, index, NETWORK)
        rep.extra["network_space"] = alt.to_dict()
    return rep


def write_metrics(path, report: MetricsReport, dataset: str, checkpoint: Optional[str] = None,
                  config_hash: Optional[str] = None) -> Path:
    payload = report.to_dict()
    payload.update({"dataset": dataset, "checkpoint": checkpoint, "config_hash": config_hash})
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path
