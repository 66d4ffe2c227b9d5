"""
Heatmap <-> keypoint conversion and coordinate-frame mapping.

Coordinates are ``(x, y)`` = ``(column, row)`` with integer values at cell
(or pixel) centres. Three frames exist: ``heatmap`` (64x64 grid), ``roi``
(the 256x256 network input) and ``image`` (the original frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .geometry import ROI_SIZE, CropTransform
from .model import HEATMAP_SIZE, NUM_KEYPOINTS

FRAMES = ("heatmap", "roi", "image")
HEATMAP_TO_ROI = ROI_SIZE / HEATMAP_SIZE
DEFAULT_SIGMA = 2.0
SUBPIXEL_SHIFT = 0.25

LANDMARK_NAMES = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)

# wrist -> finger chains, 20 bones over 21 joints
SKELETON_EDGES = tuple(
    (0 if j == 0 else base + j - 1, base + j) for base in (1, 5, 9, 13, 17) for j in range(4)
)


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """21 landmarks with confidences, tagged with the frame they live in.

    ``size`` is the frame's ``(width, height)``; it defaults to 64x64 for
    heatmaps and 256x256 for the ROI and is required for images.
    """

    xy: np.ndarray
    confidence: np.ndarray = None
    frame: str = "image"
    size: tuple = None
    visible: np.ndarray = field(default=None)

    def __post_init__(self):
        xy = np.array(self.xy, dtype=np.float64)
        if xy.shape != (NUM_KEYPOINTS, 2):
            raise ContractError(f"need {NUM_KEYPOINTS}x2 coordinates, got {xy.shape}")
        conf = np.ones(NUM_KEYPOINTS) if self.confidence is None else np.array(self.confidence, dtype=np.float64)
        if conf.shape != (NUM_KEYPOINTS,):
            raise ContractError(f"need {NUM_KEYPOINTS} confidences, got {conf.shape}")
        if self.frame not in FRAMES:
            raise ContractError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        size = self.size
        if size is None:
            if self.frame == "image":
                raise ContractError("image-frame keypoints need the image size")
            size = (HEATMAP_SIZE, HEATMAP_SIZE) if self.frame == "heatmap" else (ROI_SIZE, ROI_SIZE)
        vis = np.ones(NUM_KEYPOINTS, bool) if self.visible is None else np.array(self.visible, dtype=bool)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "size", (int(size[0]), int(size[1])))
        object.__setattr__(self, "visible", vis)

    @property
    def in_frame(self) -> np.ndarray:
        """Per-landmark flag: finite and within ``[0, w-1] x [0, h-1]``."""
        w, h = self.size
        x, y = self.xy[:, 0], self.xy[:, 1]
        return np.isfinite(x) & np.isfinite(y) & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)

    def replace(self, **changes) -> "KeypointSet":
        kw = dict(xy=self.xy, confidence=self.confidence, frame=self.frame, size=self.size, visible=self.visible)
        kw.update(changes)
        return KeypointSet(**kw)


def _check_stack(h):
    h = np.asarray(h)
    if h.ndim != 3 or h.shape[2] != NUM_KEYPOINTS:
        raise ContractError(f"heatmap stack must be HxWx{NUM_KEYPOINTS}, got {h.shape}")
    return h


def decode_peaks(heatmaps, subpixel=True) -> KeypointSet:
    """Locate the maximum of every channel.

    Ties go to the smallest row, then the smallest column. With
    ``subpixel`` the peak moves a quarter cell along each axis toward the
    larger of its two neighbours (a missing neighbour at the border counts
    as smaller than anything). Confidence is the peak's height above the
    channel median on a min-max normalised scale, so it lies in [0, 1],
    is 1 for a clean single peak, 0 for a flat channel, and is unchanged
    by positive affine rescaling of the channel.
    """
    h = _check_stack(heatmaps).astype(np.float64)
    rows, cols, k = h.shape
    flat = h.reshape(rows * cols, k)
    idx = flat.argmax(axis=0)
    peak = flat[idx, np.arange(k)]
    lo = flat.min(axis=0)
    med = np.median(flat, axis=0)
    span = peak - lo
    flat_channel = span <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.where(flat_channel, 0.0, (peak - med) / np.where(flat_channel, 1.0, span))
    conf = np.clip(conf, 0.0, 1.0)
    ys, xs = np.divmod(idx, cols)
    xy = np.stack([xs, ys], axis=1).astype(np.float64)
    if subpixel:
        for c in np.flatnonzero(~flat_channel):
            y, x = ys[c], xs[c]
            ch = h[:, :, c]
            left = ch[y, x - 1] if x > 0 else -np.inf
            right = ch[y, x + 1] if x < cols - 1 else -np.inf
            up = ch[y - 1, x] if y > 0 else -np.inf
            down = ch[y + 1, x] if y < rows - 1 else -np.inf
            xy[c, 0] += SUBPIXEL_SHIFT * (int(right > left) - int(left > right))
            xy[c, 1] += SUBPIXEL_SHIFT * (int(down > up) - int(up > down))
    return KeypointSet(xy, conf, "heatmap", (cols, rows))


def render_gaussian(keypoints: KeypointSet, sigma=DEFAULT_SIGMA, size=HEATMAP_SIZE) -> np.ndarray:
    """Target heatmaps: an unnormalised Gaussian of width ``sigma`` cells per landmark.

    Landmarks that are out of frame or flagged invisible get an all-zero
    channel.
    """
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    if keypoints.frame != "heatmap":
        raise ContractError(f"render_gaussian needs heatmap-frame keypoints, got {keypoints.frame!r}")
    grid = np.arange(size, dtype=np.float64)
    out = np.zeros((size, size, NUM_KEYPOINTS), dtype=np.float32)
    ok = keypoints.in_frame & keypoints.visible
    for c in np.flatnonzero(ok):
        kx, ky = keypoints.xy[c]
        gx = np.exp(-((grid - kx) ** 2) / (2 * sigma**2))
        gy = np.exp(-((grid - ky) ** 2) / (2 * sigma**2))
        out[:, :, c] = np.outer(gy, gx)
    return out


def map_keypoints(keypoints: KeypointSet, transform: CropTransform | None, target: str) -> KeypointSet:
    """Move keypoints between the heatmap, ROI and image frames.

    Heatmap <-> ROI is a fixed x4 scale; ROI <-> image applies the crop
    transform (``transform`` may be ``None`` when the image frame is not
    involved).
    """
    if target not in FRAMES:
        raise ContractError(f"target frame must be one of {FRAMES}, got {target!r}")
    order = {f: i for i, f in enumerate(FRAMES)}
    xy, frame = keypoints.xy, keypoints.frame
    needs_transform = "image" in (frame, target) and frame != target
    if needs_transform and transform is None:
        raise ContractError("mapping to or from the image frame needs a crop transform")
    size = keypoints.size
    while frame != target:
        step_up = order[target] > order[frame]
        if frame == "heatmap":
            xy, frame, size = xy * HEATMAP_TO_ROI, "roi", (ROI_SIZE, ROI_SIZE)
        elif frame == "roi" and step_up:
            if transform.image_size is None:
                raise ContractError("crop transform does not record the image size")
            xy, frame, size = transform.to_image(xy), "image", transform.image_size
        elif frame == "roi":
            xy, frame, size = xy / HEATMAP_TO_ROI, "heatmap", (HEATMAP_SIZE, HEATMAP_SIZE)
        else:
            xy, frame, size = transform.to_roi(xy), "roi", (transform.roi_size, transform.roi_size)
    return keypoints.replace(xy=xy, frame=target, size=size)

