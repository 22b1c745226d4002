"""Landmark containers and coordinate-space algebra.

Coordinates are continuous sub-pixel values with the origin at the centre of
the top-left pixel; ``x`` is the column and ``y`` the row.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)


class InvalidSpaceError(ValueError):
    pass


class ContractError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


@dataclass(frozen=True)
class ImageSpace:
    width: int
    height: int

    def __post_init__(self):
        for name in ("width", "height"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v <= 0:
                raise InvalidSpaceError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width), i.e. numpy array order."""
        return (self.height, self.width)

    def __str__(self):
        return f"{self.width}x{self.height}"

    @classmethod
    def parse(cls, value) -> "ImageSpace":
        if isinstance(value, ImageSpace):
            return value
        if isinstance(value, str):
            w, h = value.lower().split("x")
            return cls(int(w), int(h))
        if isinstance(value, dict):
            return cls(value["width"], value["height"])
        w, h = value
        return cls(w, h)

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


class Landmark(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """K ordered landmarks expressed in one image space.

    ``points`` is a read-only ``(K, 2)`` float64 array of ``(x, y)`` rows.
    """

    points: np.ndarray
    space: ImageSpace

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ContractError("landmark coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_flat(cls, values: Sequence[float], space: ImageSpace) -> "LandmarkSet":
        """Build from ``x1, y1, x2, y2, ...``."""
        vals = np.asarray(values, dtype=np.float64)
        if vals.size % 2:
            raise ContractError(f"odd number of coordinates ({vals.size})")
        return cls(vals.reshape(-1, 2), space)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self) -> Iterator[Landmark]:
        for x, y in self.points:
            yield Landmark(float(x), float(y))

    def __getitem__(self, i) -> Landmark:
        x, y = self.points[i]
        return Landmark(float(x), float(y))

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def landmarks(self) -> list[Landmark]:
        return list(self)

    def flat(self) -> list[float]:
        return [float(v) for v in self.points.reshape(-1)]

    def out_of_bounds(self) -> np.ndarray:
        """Boolean mask of landmarks outside ``[0, width) x [0, height)``."""
        x, y = self.points[:, 0], self.points[:, 1]
        return (x < 0) | (y < 0) | (x >= self.space.width) | (y >= self.space.height)

    def translated(self, dx: float, dy: float) -> "LandmarkSet":
        return LandmarkSet(self.points + np.array([dx, dy]), self.space)


def map_landmarks(src: LandmarkSet, from_space: ImageSpace, to_space: ImageSpace) -> LandmarkSet:
    """Rescale landmarks between two image spaces, independently per axis."""
    from_space = ImageSpace.parse(from_space)
    to_space = ImageSpace.parse(to_space)
    if src.space != from_space:
        raise ContractError(f"landmarks are in {src.space}, not {from_space}")
    scale = np.array([to_space.width / from_space.width, to_space.height / from_space.height])
    return LandmarkSet(src.points * scale, to_space)


def radial_distances(pred: LandmarkSet, truth: LandmarkSet) -> np.ndarray:
    """Per-landmark Euclidean distance in pixels of the shared space."""
    if len(pred) != len(truth):
        raise ContractError(f"landmark count mismatch: {len(pred)} vs {len(truth)}")
    if pred.space != truth.space:
        raise ContractError(f"space mismatch: {pred.space} vs {truth.space}")
    diff = pred.points - truth.points
    return np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)
