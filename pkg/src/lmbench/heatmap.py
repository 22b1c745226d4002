"""Gaussian heatmap labels: landmarks -> K-channel stacks and back."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ContractError, ImageSpace, LandmarkSet

TRUNCATE = 1e-4
ARGMAX, SUBPIXEL = "argmax", "subpixel"


@dataclass(frozen=True, eq=False)
class HeatmapStack:
    values: np.ndarray  # (K, H, W)
    space: ImageSpace
    sigma: Optional[float] = None
    # True where a channel was left empty because its landmark is far off-grid.
    off_grid: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[1:] != self.space.shape:
            raise ContractError(f"stack shape {v.shape} does not match space {self.space}")
        object.__setattr__(self, "values", v)
        if self.off_grid is None:
            object.__setattr__(self, "off_grid", np.zeros(v.shape[0], dtype=bool))

    def __len__(self):
        return self.values.shape[0]


def encode(lms: LandmarkSet, space: ImageSpace, sigma: float, dtype=np.float32) -> HeatmapStack:
    """Unit-peak Gaussian per landmark; tails below ``1e-4`` are zeroed."""
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    if lms.space != space:
        raise ContractError(f"landmarks are in {lms.space}, not {space}")
    H, W = space.shape
    pts = lms.points
    x, y = pts[:, 0], pts[:, 1]
    reach = 3 * sigma
    off = (x < -reach) | (y < -reach) | (x > W - 1 + reach) | (y > H - 1 + reach)

    # separable: exp(-(dx^2 + dy^2) / 2s^2) = gx * gy
    u = np.arange(W, dtype=np.float64)
    v = np.arange(H, dtype=np.float64)
    gx = np.exp(-((u[None, :] - x[:, None]) ** 2) / (2 * sigma ** 2))
    gy = np.exp(-((v[None, :] - y[:, None]) ** 2) / (2 * sigma ** 2))
    values = gy[:, :, None] * gx[:, None, :]
    values[values < TRUNCATE] = 0.0
    values[off] = 0.0
    return HeatmapStack(values.astype(dtype, copy=False), space, float(sigma), off)


def _refine(left: float, centre: float, right: float) -> float:
    denom = left - 2.0 * centre + right
    if denom >= 0:  # not a strict local maximum along this axis
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def decode(stack: HeatmapStack, mode: str = ARGMAX, return_flags: bool = False):
    """Peak location per channel.

    Ties resolve to the first maximum in row-major order. Flat channels (all
    values equal, e.g. all zero) decode to the grid centre and are flagged as
    low confidence. ``subpixel`` adds a per-axis parabola through the peak and
    its two neighbours, clamped to half a pixel.
    """
    if mode not in (ARGMAX, SUBPIXEL):
        raise ValueError(f"unknown decode mode {mode!r}")
    vals = np.asarray(stack.values, dtype=np.float64)
    K, H, W = vals.shape
    if K < 1:
        raise ContractError("empty heatmap stack")
    flat = vals.reshape(K, -1)
    idx = flat.argmax(axis=1)
    low = flat.max(axis=1) == flat.min(axis=1)
    ys, xs = np.divmod(idx, W)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    if mode == SUBPIXEL:
        for k in np.flatnonzero(~low):
            x, y = xs[k], ys[k]
            ch = vals[k]
            if 0 < x < W - 1:
                pts[k, 0] += _refine(ch[y, x - 1], ch[y, x], ch[y, x + 1])
            if 0 < y < H - 1:
                pts[k, 1] += _refine(ch[y - 1, x], ch[y, x], ch[y + 1, x])
    pts[low] = [(W - 1) / 2.0, (H - 1) / 2.0]
    lms = LandmarkSet(pts, stack.space)
    return (lms, low) if return_flags else lms


def decode_array(values: np.ndarray, space: ImageSpace, mode: str = ARGMAX) -> LandmarkSet:
    return decode(HeatmapStack(values, space), mode)


def export_stack(stack: HeatmapStack, path) -> None:
    """Write one 8-bit page per channel to a multi-page TIFF for inspection."""
    from PIL import Image

    top = max(float(stack.values.max()), 1e-12)
    pages = [Image.fromarray(np.clip(ch / top * 255, 0, 255).astype(np.uint8)) for ch in stack.values]
    pages[0].save(path, save_all=True, append_images=pages[1:])
