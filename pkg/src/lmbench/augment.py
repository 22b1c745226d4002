"""Random affine + intensity augmentation applied jointly to image and landmarks."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import cv2
import numpy as np

from .core import LandmarkSet


@dataclass(frozen=True)
class AugmentPolicy:
    rotation_deg: float = 10.0
    scale: tuple[float, float] = (0.9, 1.1)
    translate_frac: float = 0.05
    brightness: float = 0.2
    contrast: float = 0.2
    probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        lo, hi = self.scale
        if not (0 < lo <= hi):
            raise ValueError(f"scale range must satisfy 0 < lo <= hi, got {self.scale}")
        for name in ("rotation_deg", "translate_frac", "brightness", "contrast"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} is a symmetric half-range and must be >= 0")
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must lie in [0, 1]")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentPolicy":
        return cls(0.0, (1.0, 1.0), 0.0, 0.0, 0.0, 0.0, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale"] = list(self.scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(**d)


@dataclass(frozen=True)
class Draw:
    angle_deg: float = 0.0
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0
    brightness: float = 0.0
    contrast: float = 1.0


def rng_for(seed: int, image_id: str, epoch: int = 0) -> np.random.Generator:
    """Independent stream per (seed, image, epoch); stable across processes."""
    return np.random.default_rng([seed, zlib.crc32(image_id.encode("utf-8")), epoch])


def sample(policy: AugmentPolicy, rng: np.random.Generator, width: int, height: int) -> Draw:
    p = policy.probability

    def use():
        return rng.random() < p

    # Always consume the same number of draws so streams stay aligned.
    flags = [use() for _ in range(5)]
    angle = rng.uniform(-policy.rotation_deg, policy.rotation_deg)
    scale = rng.uniform(*policy.scale)
    tx = rng.uniform(-policy.translate_frac, policy.translate_frac) * width
    ty = rng.uniform(-policy.translate_frac, policy.translate_frac) * height
    bright = rng.uniform(-policy.brightness, policy.brightness)
    contrast = 1.0 + rng.uniform(-policy.contrast, policy.contrast)
    return Draw(
        angle_deg=angle if flags[0] else 0.0,
        scale=scale if flags[1] else 1.0,
        tx=tx if flags[2] else 0.0,
        ty=ty if flags[2] else 0.0,
        brightness=bright if flags[3] else 0.0,
        contrast=contrast if flags[4] else 1.0,
    )


def affine_matrix(draw: Draw, width: int, height: int) -> np.ndarray:
    """2x3 forward map (source pixel -> output pixel) about the image centre."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    a = np.deg2rad(draw.angle_deg)
    c, s = np.cos(a) * draw.scale, np.sin(a) * draw.scale
    lin = np.array([[c, -s], [s, c]])
    centre = np.array([cx, cy])
    offset = centre - lin @ centre + np.array([draw.tx, draw.ty])
    return np.hstack([lin, offset[:, None]])


def transform_points(points: np.ndarray, m: np.ndarray) -> np.ndarray:
    return points @ m[:, :2].T + m[:, 2]


def apply(image: np.ndarray, lms: LandmarkSet, policy: AugmentPolicy,
          rng: np.random.Generator) -> tuple[np.ndarray, LandmarkSet]:
    """Augment a float image in [0, 1] (H x W) and its landmarks with one random draw.

    Landmarks go through the analytic affine map; points pushed off the image
    are kept as-is for the heatmap codec to flag.
    """
    H, W = image.shape[:2]
    draw = sample(policy, rng, W, H)
    if not (np.isfinite(draw.scale) and draw.scale > 0):
        draw = Draw()
    return apply_draw(image, lms, draw)


def apply_draw(image: np.ndarray, lms: LandmarkSet, draw: Draw) -> tuple[np.ndarray, LandmarkSet]:
    H, W = image.shape[:2]
    out = image
    if (draw.angle_deg, draw.scale, draw.tx, draw.ty) != (0.0, 1.0, 0.0, 0.0):
        m = affine_matrix(draw, W, H)
        out = cv2.warpAffine(image, m, (W, H), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=0)
        lms = LandmarkSet(transform_points(lms.points, m), lms.space)
    if draw.contrast != 1.0 or draw.brightness != 0.0:
        mean = float(out.mean())
        out = np.clip((out - mean) * draw.contrast + mean + draw.brightness, 0.0, 1.0)
    return out, lms
