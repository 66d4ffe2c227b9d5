"""
Per-frame hand tracking: detection -> box stabilisation -> ROI crop ->
landmark network -> keypoints in image coordinates.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import tensor as T
from .errors import AnnotationFormatError, ContractError, HandLostError
from .geometry import ROI_SIZE, BoundingBox, CropTransform
from .heatmap import KeypointSet, decode_peaks, map_keypoints
from .model import Model, forward

logger = logging.getLogger(__name__)

HISTORY_FRAMES = 6  # previous frames averaged with the current one
DEFAULT_MARGIN = 1.5
MAX_MISSED_FRAMES = 10


def stabilization_weights(m) -> np.ndarray:
    """Normalised ``exp(-k)`` weights for the ``m`` newest boxes (index 0 = current)."""
    if m < 1:
        raise ContractError("need at least one box to stabilise")
    w = np.exp(-np.arange(m, dtype=np.float64))
    return w / w.sum()


class BoxHistory:
    """Newest-first ring buffer of the last ``n + 1`` boxes."""

    def __init__(self, n=HISTORY_FRAMES):
        if n < 0:
            raise ContractError(f"history length must be non-negative, got {n}")
        self.n = n
        self._boxes: deque[BoundingBox] = deque(maxlen=n + 1)

    @property
    def capacity(self) -> int:
        return self.n + 1

    def __len__(self):
        return len(self._boxes)

    def __iter__(self) -> Iterator[BoundingBox]:
        return iter(self._boxes)

    def __getitem__(self, k) -> BoundingBox:
        return self._boxes[k]

    @property
    def newest(self) -> BoundingBox | None:
        return self._boxes[0] if self._boxes else None

    def push(self, box: BoundingBox):
        push_detection(self, box)

    def clear(self):
        self._boxes.clear()


def push_detection(history: BoxHistory, box: BoundingBox):
    """Make ``box`` the current (k=0) entry, evicting the oldest when full."""
    if not isinstance(box, BoundingBox):
        raise ContractError(f"expected a BoundingBox, got {type(box).__name__}")
    history._boxes.appendleft(box)


def stabilize(history: BoxHistory) -> BoundingBox:
    """Exponentially weighted average of the boxes in ``history``.

    Each coordinate is ``sum_k P_k exp(-k) / sum_j exp(-j)`` over the
    ``m = len(history)`` stored boxes, so short histories are renormalised
    over what is available.
    """
    if not len(history):
        raise ContractError("cannot stabilise an empty box history")
    coords = np.array([b.as_array() for b in history])
    w = stabilization_weights(len(coords))
    out = w @ coords
    # a convex combination cannot leave the coordinate-wise envelope; clamp away rounding
    out = np.clip(out, coords.min(axis=0), coords.max(axis=0))
    return BoundingBox(*map(float, out))


def crop_and_resize(image, box: BoundingBox, margin=DEFAULT_MARGIN, size=ROI_SIZE):
    """Cut the square ROI around ``box`` and resample it to ``size`` x ``size``.

    The box is squared about its centre with side ``max(w, h) * margin``;
    parts outside the image repeat the border pixels.

    Returns:
        ``(roi, transform)`` where ``transform`` maps ROI pixel coordinates
        back to image coordinates.

    Raises:
        HandLostError: the box does not overlap the image.
    """
    image = T.as_tensor(image, "image")
    h, w, _ = image.shape
    if not box.intersects(w, h):
        raise HandLostError(f"box {box} does not overlap the {w}x{h} image")
    square = box.squared(margin)
    transform = CropTransform.for_square(square, size, image_size=(w, h))
    ys, xs = transform.roi_axes()
    return T.sample_separable(image, ys, xs), transform


class DetectionSource:
    """Supplies at most one hand box per frame index."""

    def detect(self, frame_index, image=None) -> BoundingBox | None:
        raise NotImplementedError


class StaticDetections(DetectionSource):
    """Detections looked up from a precomputed ``{frame_index: box}`` table."""

    def __init__(self, boxes: Mapping[int, BoundingBox]):
        self.boxes = dict(boxes)

    def detect(self, frame_index, image=None):
        return self.boxes.get(frame_index)

    @classmethod
    def from_file(cls, path):
        return cls(read_detections(path))


def parse_detections(lines: Iterable[str]) -> dict[int, BoundingBox]:
    """Parse ``frame_index x1 y1 x2 y2`` records; ``#`` starts a comment."""
    boxes = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise AnnotationFormatError(f"expected 'frame x1 y1 x2 y2', got {len(parts)} fields", lineno)
        try:
            idx = int(parts[0])
            coords = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise AnnotationFormatError(str(exc), lineno) from None
        try:
            boxes[idx] = BoundingBox(*coords)
        except ContractError as exc:
            raise AnnotationFormatError(str(exc), lineno) from None
    return boxes


def read_detections(path) -> dict[int, BoundingBox]:
    with open(path) as f:
        return parse_detections(f)


def write_detections(boxes: Mapping[int, BoundingBox], path):
    with open(path, "w") as f:
        f.write("# frame_index x1 y1 x2 y2\n")
        for idx in sorted(boxes):
            b = boxes[idx]
            f.write(f"{idx} {b.x1!r} {b.y1!r} {b.x2!r} {b.y2!r}\n")


@dataclass
class FrameResult:
    keypoints: KeypointSet | None
    box: BoundingBox | None
    status: str  # "detected", "coasting" or "lost"
    transform: CropTransform | None = None
    heatmaps: np.ndarray | None = None


class Pipeline:
    """Stateful single-hand tracker around a shared, read-only model.

    Args:
        model: bound network.
        margin: ROI square side as a multiple of the box's longer side.
        stabilize: average boxes over the history; otherwise the newest
            detection is used as-is.
        subpixel: quarter-cell peak refinement.
        history: number of previous boxes kept (6).
        max_missed: frames to keep reusing the last box without a detection.
    """

    def __init__(self, model: Model, margin=DEFAULT_MARGIN, stabilize=True, subpixel=True,
                 history=HISTORY_FRAMES, max_missed=MAX_MISSED_FRAMES):
        self.model = model
        self.margin = margin
        self.use_stabilizer = stabilize
        self.subpixel = subpixel
        self.max_missed = max_missed
        self.history = BoxHistory(history)
        self.missed = 0
        self.last_box: BoundingBox | None = None

    def reset(self):
        self.history.clear()
        self.missed = 0
        self.last_box = None

    def current_box(self) -> BoundingBox:
        return stabilize(self.history) if self.use_stabilizer else self.history.newest

    def process_frame(self, image, detection: BoundingBox | None = None) -> FrameResult:
        """Track one frame; ``result.keypoints`` is ``None`` when no hand is available."""
        if detection is not None:
            push_detection(self.history, detection)
            self.missed = 0
            status = "detected"
        else:
            self.missed += 1
            if not len(self.history) or self.missed > self.max_missed:
                if len(self.history):
                    logger.info("hand lost after %d frames without detection", self.missed - 1)
                self.history.clear()
                self.last_box = None
                return FrameResult(None, None, "lost")
            status = "coasting"
        box = self.current_box()
        self.last_box = box
        try:
            keypoints, transform, heatmaps = localize(self.model, image, box, self.margin, self.subpixel)
        except HandLostError:
            return FrameResult(None, box, "lost")
        return FrameResult(keypoints, box, status, transform, heatmaps)

    def run(self, frames: Iterable, detections: DetectionSource) -> Iterator[FrameResult]:
        for i, image in enumerate(frames):
            yield self.process_frame(image, detections.detect(i, image))


def localize(model: Model, image, box: BoundingBox, margin=DEFAULT_MARGIN, subpixel=True):
    """Crop, run the network and return ``(image-frame keypoints, transform, heatmaps)``."""
    roi, transform = crop_and_resize(image, box, margin)
    heatmaps = forward(model, roi)
    kps = map_keypoints(decode_peaks(heatmaps, subpixel), transform, "image")
    return kps, transform, heatmaps


def box_variance(boxes) -> float:
    """Mean per-coordinate variance of a sequence of boxes."""
    arr = np.array([b.as_array() for b in boxes])
    return float(arr.var(axis=0).mean())

