"""Boxes and crop transforms shared by the tracker, codec and dataset tools."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

ROI_SIZE = 256


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = tuple(float(v) for v in (self.x1, self.y1, self.x2, self.y2))
        for name, v in zip(("x1", "y1", "x2", "y2"), vals):
            object.__setattr__(self, name, v)
        if not all(math.isfinite(v) for v in vals):
            raise ContractError(f"box coordinates must be finite: {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ContractError(f"degenerate box: need x1 < x2 and y1 < y2, got {vals}")

    @classmethod
    def from_points(cls, xy):
        xy = np.asarray(xy, dtype=np.float64)
        return cls(*map(float, (xy[:, 0].min(), xy[:, 1].min(), xy[:, 0].max(), xy[:, 1].max())))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self):
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def squared(self, margin=1.0) -> "BoundingBox":
        """Square box about the same centre with side ``max(w, h) * margin``."""
        if margin <= 0:
            raise ContractError(f"margin must be positive, got {margin}")
        cx, cy = self.center
        half = max(self.width, self.height) * margin / 2
        return BoundingBox(cx - half, cy - half, cx + half, cy + half)

    def intersects(self, width, height) -> bool:
        """Whether the box overlaps the image ``[0, width) x [0, height)`` with positive area."""
        return min(self.x2, width) > max(self.x1, 0) and min(self.y2, height) > max(self.y1, 0)


@dataclass(frozen=True)
class CropTransform:
    """Axis-aligned similarity mapping ROI pixel coordinates to image coordinates.

    ``image = scale * roi + offset``. Pixel coordinates put integer values
    at pixel centres. ``image_size`` is ``(width, height)`` of the source
    image when known.
    """

    scale: float
    offset_x: float
    offset_y: float
    image_size: tuple | None = None
    roi_size: int = ROI_SIZE

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ContractError(f"crop transform scale must be positive, got {self.scale}")

    @classmethod
    def for_square(cls, box: BoundingBox, roi_size=ROI_SIZE, image_size=None) -> "CropTransform":
        """Transform that resamples the square ``box`` onto a ``roi_size`` grid."""
        side = box.width
        scale = side / roi_size
        # ROI pixel centre u covers image span [x1 + u*scale, x1 + (u+1)*scale)
        return cls(scale, box.x1 + 0.5 * scale - 0.5, box.y1 + 0.5 * scale - 0.5, image_size, roi_size)

    @classmethod
    def identity(cls, roi_size=ROI_SIZE):
        return cls(1.0, 0.0, 0.0, (roi_size, roi_size), roi_size)

    def to_image(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        return xy * self.scale + (self.offset_x, self.offset_y)

    def to_roi(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        return (xy - (self.offset_x, self.offset_y)) / self.scale

    def roi_axes(self):
        """Image-space sample coordinates (ys, xs) for every ROI row and column."""
        u = np.arange(self.roi_size, dtype=np.float64)
        return u * self.scale + self.offset_y, u * self.scale + self.offset_x
