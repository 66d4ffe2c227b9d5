"""
Line-delimited landmark annotations.

One record per line, whitespace separated::

    image_path w h x0 y0 ... x20 y20 [v0 ... v20] [bx1 by1 bx2 by2]

The optional visibility flags (0/1) and hand box are recognised by the
field count (45, 66, 49 or 70). Lines starting with ``#`` are comments.
Image paths may not contain whitespace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import AnnotationFormatError, ContractError
from .geometry import BoundingBox
from .heatmap import KeypointSet
from .model import NUM_KEYPOINTS

_BASE = 3 + 2 * NUM_KEYPOINTS
_LAYOUTS = {
    _BASE: (False, False),
    _BASE + NUM_KEYPOINTS: (True, False),
    _BASE + 4: (False, True),
    _BASE + NUM_KEYPOINTS + 4: (True, True),
}


@dataclass(frozen=True, eq=False)
class AnnotationRecord:
    image_path: str
    width: int
    height: int
    xy: np.ndarray
    visible: np.ndarray | None = None
    box: BoundingBox | None = None

    def __post_init__(self):
        xy = np.array(self.xy, dtype=np.float64)
        if xy.shape != (NUM_KEYPOINTS, 2):
            raise ContractError(f"{self.image_path}: need {NUM_KEYPOINTS}x2 landmarks, got {xy.shape}")
        if not np.isfinite(xy).all():
            raise ContractError(f"{self.image_path}: landmark coordinates must be finite")
        if self.width < 1 or self.height < 1:
            raise ContractError(f"{self.image_path}: image size must be positive, got {self.width}x{self.height}")
        if not self.image_path or any(c.isspace() for c in self.image_path):
            raise ContractError(f"image path must be non-empty without whitespace: {self.image_path!r}")
        object.__setattr__(self, "xy", xy)
        if self.visible is not None:
            vis = np.array(self.visible, dtype=bool)
            if vis.shape != (NUM_KEYPOINTS,):
                raise ContractError(f"{self.image_path}: need {NUM_KEYPOINTS} visibility flags")
            object.__setattr__(self, "visible", vis)

    @property
    def visibility(self) -> np.ndarray:
        return np.ones(NUM_KEYPOINTS, bool) if self.visible is None else self.visible

    def keypoints(self) -> KeypointSet:
        return KeypointSet(self.xy, frame="image", size=(self.width, self.height), visible=self.visibility)

    def hand_box(self) -> BoundingBox:
        """The stored box, or the tight box around the visible landmarks."""
        if self.box is not None:
            return self.box
        pts = self.xy[self.visibility]
        if not len(pts):
            raise ContractError(f"{self.image_path}: no visible landmarks to derive a box from")
        x1, y1 = pts.min(axis=0)
        x2, y2 = pts.max(axis=0)
        # landmarks on a line still need a positive-area box
        return BoundingBox(x1 - 0.5, y1 - 0.5, max(x2, x1) + 0.5, max(y2, y1) + 0.5)

    def __eq__(self, other):
        if not isinstance(other, AnnotationRecord):
            return NotImplemented
        same_vis = (self.visible is None and other.visible is None) or (
            self.visible is not None and other.visible is not None and np.array_equal(self.visible, other.visible)
        )
        return (
            self.image_path == other.image_path
            and (self.width, self.height) == (other.width, other.height)
            and np.array_equal(self.xy, other.xy)
            and same_vis
            and self.box == other.box
        )


def format_record(rec: AnnotationRecord) -> str:
    parts = [rec.image_path, str(rec.width), str(rec.height)]
    parts += [repr(float(v)) for v in rec.xy.ravel()]
    if rec.visible is not None:
        parts += ["1" if v else "0" for v in rec.visible]
    if rec.box is not None:
        parts += [repr(float(v)) for v in (rec.box.x1, rec.box.y1, rec.box.x2, rec.box.y2)]
    return " ".join(parts)


def parse_record(line: str, lineno=None) -> AnnotationRecord:
    parts = line.split()
    if len(parts) not in _LAYOUTS:
        raise AnnotationFormatError(
            f"expected {sorted(_LAYOUTS)} fields, got {len(parts)} (truncated or malformed record)", lineno
        )
    has_vis, has_box = _LAYOUTS[len(parts)]
    try:
        width, height = int(parts[1]), int(parts[2])
        coords = [float(p) for p in parts[3:_BASE]]
        pos = _BASE
        visible = None
        if has_vis:
            flags = parts[pos : pos + NUM_KEYPOINTS]
            if any(f not in ("0", "1") for f in flags):
                raise ValueError(f"visibility flags must be 0 or 1, got {flags}")
            visible = [f == "1" for f in flags]
            pos += NUM_KEYPOINTS
        box = BoundingBox(*(float(p) for p in parts[pos : pos + 4])) if has_box else None
        if not all(math.isfinite(c) for c in coords):
            raise ValueError("non-finite landmark coordinate")
        return AnnotationRecord(parts[0], width, height, np.reshape(coords, (NUM_KEYPOINTS, 2)), visible, box)
    except (ValueError, ContractError) as exc:
        raise AnnotationFormatError(str(exc), lineno) from None


def iter_annotations(path) -> Iterator[AnnotationRecord]:
    """Stream records from ``path`` one line at a time."""
    with open(path) as f:
        yield from parse_annotations(f)


def parse_annotations(lines: Iterable[str]) -> Iterator[AnnotationRecord]:
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        yield parse_record(s, lineno)


def read_annotations(path) -> list[AnnotationRecord]:
    return list(iter_annotations(path))


def write_annotations(records: Iterable[AnnotationRecord], path):
    with open(path, "w") as f:
        for rec in records:
            f.write(format_record(rec))
            f.write("\n")


def append_annotations(records: Iterable[AnnotationRecord], path):
    with open(path, "a") as f:
        for rec in records:
            f.write(format_record(rec))
            f.write("\n")
