"""Encoder-decoder heatmap regressors and checkpoint files."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

log = logging.getLogger(__name__)

ARCHITECTURES = {"unet": "Unet", "unetpp": "UnetPlusPlus", "deeplabv3": "DeepLabV3"}
GRID_ENCODERS = ("efficientnet-b7", "resnext101_32x8d", "vgg19")
# Small encoder for CPU smoke runs on synthetic data; not part of the benchmark grid.
LIGHT_ENCODERS = ("resnet18",)
UNSUPPORTED = {("deeplabv3", "vgg19")}
PRETRAINED = ("imagenet", "none")
HEAD_PREFIX = "net.segmentation_head.0."
PAD_MULTIPLE = 32


class CapabilityError(ValueError):
    """Architecture/encoder combination that the registry cannot build."""


class WeightsUnavailableError(RuntimeError):
    pass


class CheckpointLoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    architecture: str = "unetpp"
    encoder: str = "vgg19"
    pretrained: str = "imagenet"
    out_channels: int = 1

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise CapabilityError(f"unknown architecture {self.architecture!r}")
        if self.encoder not in GRID_ENCODERS + LIGHT_ENCODERS:
            raise CapabilityError(f"unknown encoder {self.encoder!r}")
        if (self.architecture, self.encoder) in UNSUPPORTED:
            raise CapabilityError(f"{self.architecture} does not support the {self.encoder} encoder")
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")

    def with_channels(self, k: int) -> "ModelSpec":
        return replace(self, out_channels=k)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def table1_grid(out_channels: int = 37, pretrained: str = "imagenet") -> list[ModelSpec]:
    """Every buildable (architecture, published-grid encoder) pair, in table order."""
    specs = []
    for arch in ARCHITECTURES:
        for enc in GRID_ENCODERS:
            if (arch, enc) not in UNSUPPORTED:
                specs.append(ModelSpec(arch, enc, pretrained, out_channels))
    return specs


class LandmarkNet(nn.Module):
    """Wraps an smp model: replicates grayscale input to 3 channels and pads
    to a multiple of 32 so any H x W comes back at the same size."""

    def __init__(self, net: nn.Module, spec: ModelSpec, lineage: Optional[list] = None):
        super().__init__()
        self.net = net
        self.spec = spec
        self.lineage = list(lineage or [])

    @property
    def head(self) -> nn.Conv2d:
        return self.net.segmentation_head[0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] == 1:
            x = x.expand(-1, 3, -1, -1)
        elif x.shape[1] != 3:
            raise ValueError(f"expected 1 or 3 input channels, got {x.shape[1]}")
        h, w = x.shape[-2:]
        ph, pw = (-h) % PAD_MULTIPLE, (-w) % PAD_MULTIPLE
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph))
        return self.net(x)[..., :h, :w]


def _smp_model(spec: ModelSpec, weights: Optional[str]) -> nn.Module:
    import segmentation_models_pytorch as smp

    cls = getattr(smp, ARCHITECTURES[spec.architecture])
    return cls(encoder_name=spec.encoder, encoder_weights=weights, in_channels=3,
               classes=spec.out_channels)


def build(spec: ModelSpec) -> LandmarkNet:
    """Instantiate ``spec``; raw scores out, no output activation.

    ``pretrained`` is ``imagenet``, ``none``, or a checkpoint path whose
    weights are loaded wholesale (its K must match).
    """
    if spec.pretrained == "imagenet":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                net = _smp_model(spec, "imagenet")
        except Exception as exc:
            raise WeightsUnavailableError(
                f"could not load ImageNet weights for {spec.encoder}: {exc}. "
                "Pre-populate the torch hub / Hugging Face cache or use pretrained='none'."
            ) from exc
        return LandmarkNet(net, spec)
    if spec.pretrained == "none":
        return LandmarkNet(_smp_model(spec, None), spec)
    ckpt = load_checkpoint(spec.pretrained)
    if ckpt.spec.out_channels != spec.out_channels:
        raise CheckpointLoadError(
            f"checkpoint has K={ckpt.spec.out_channels}, spec asks for {spec.out_channels}; use swap_head")
    model = LandmarkNet(_smp_model(replace(spec, pretrained="none"), None), spec, ckpt.lineage)
    model.load_state_dict(ckpt.state_dict)
    return model


def reset_head(model: LandmarkNet, seed: int) -> None:
    """Seeded fan-in-scaled uniform init of the final conv (PyTorch's default scheme)."""
    conv = model.head
    gen = torch.Generator().manual_seed(int(seed))
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        conv.weight.copy_(torch.empty_like(conv.weight).uniform_(-bound, bound, generator=gen))
        conv.bias.copy_(torch.empty_like(conv.bias).uniform_(-bound, bound, generator=gen))


@dataclass
class Checkpoint:
    state_dict: dict
    spec: ModelSpec
    lineage: list = field(default_factory=list)
    metrics_at_save: Optional[dict] = None
    meta: dict = field(default_factory=dict)
    path: Optional[str] = None

    @property
    def origin(self) -> str:
        return self.meta.get("origin", "imagenet")


def swap_head(ckpt: Checkpoint, new_k: int, seed: int) -> LandmarkNet:
    """Model carrying ``ckpt``'s weights everywhere except a fresh ``new_k``-channel head.

    The head is always re-initialised, even when ``new_k`` equals the old K.
    """
    spec = replace(ckpt.spec, out_channels=new_k)
    model = LandmarkNet(_smp_model(replace(spec, pretrained="none"), None), spec, ckpt.lineage)
    body = {k: v for k, v in ckpt.state_dict.items() if not k.startswith(HEAD_PREFIX)}
    missing, unexpected = model.load_state_dict(body, strict=False)
    if unexpected or any(not k.startswith(HEAD_PREFIX) for k in missing):
        raise CheckpointLoadError(f"checkpoint does not fit {spec}: missing={missing} unexpected={unexpected}")
    reset_head(model, seed)
    return model


def body_digest(state_dict: dict) -> str:
    """SHA-256 over every non-head tensor's bytes, in key order."""
    h = hashlib.sha256()
    for k in sorted(state_dict):
        if k.startswith(HEAD_PREFIX):
            continue
        t = state_dict[k].detach().cpu().contiguous()
        h.update(k.encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def _atomic(path: Path, write) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)


def save_checkpoint(path, model: LandmarkNet, lineage: Optional[list] = None,
                    metrics: Optional[dict] = None, **meta) -> Path:
    """Write ``path`` (weights) and ``path.json`` (spec, lineage, metadata)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    lineage = list(model.lineage if lineage is None else lineage)
    sidecar = {
        "spec": model.spec.to_dict(),
        "lineage": lineage,
        "metrics_at_save": metrics,
        "origin": meta.pop("origin", "imagenet"),
        "body_digest": body_digest(state),
        **meta,
    }
    _atomic(path, lambda p: torch.save(state, p))
    _atomic(Path(str(path) + ".json"),
            lambda p: p.write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str)))
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        side = json.loads(Path(str(path) + ".json").read_text())
        state = torch.load(path, map_location="cpu", weights_only=True)
        spec = ModelSpec.from_dict(side["spec"])
    except Exception as exc:
        raise CheckpointLoadError(f"cannot load checkpoint {path}: {exc}") from exc
    head_w = state.get(HEAD_PREFIX + "weight")
    if head_w is None or head_w.shape[0] != spec.out_channels:
        raise CheckpointLoadError(f"{path}: head shape disagrees with out_channels={spec.out_channels}")
    meta = {k: v for k, v in side.items() if k not in ("spec", "lineage", "metrics_at_save")}
    return Checkpoint(state, spec, side.get("lineage", []), side.get("metrics_at_save"), meta, str(path))


def checkpoint_model(ckpt: Checkpoint) -> LandmarkNet:
    model = LandmarkNet(_smp_model(replace(ckpt.spec, pretrained="none"), None), ckpt.spec, ckpt.lineage)
    model.load_state_dict(ckpt.state_dict)
    return model
