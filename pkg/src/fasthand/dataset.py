"""
2D landmark dataset generation from hand meshes, and scale/crop augmentation.

Joints are the mean of a fixed set of 10 mesh vertices each (the mapping
is user-supplied configuration), projected with a distortion-free pinhole
camera.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .annotations import AnnotationRecord
from .errors import AnnotationFormatError, ContractError
from .geometry import ROI_SIZE, BoundingBox, CropTransform
from .model import NUM_KEYPOINTS

logger = logging.getLogger(__name__)

VERTICES_PER_JOINT = 10
AUGMENT_COUNT = 10
SCALE_RANGE = (0.8, 1.2)
JITTER = 0.1
MAX_OUT_OF_FRAME = 0.5


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.cx > 0 and self.cy > 0):
            raise ContractError(f"intrinsics must be positive: {self}")
        if self.width < 1 or self.height < 1:
            raise ContractError(f"image size must be positive: {self.width}x{self.height}")

    @classmethod
    def from_file(cls, path):
        """Read ``fx fy cx cy width height`` (first non-comment line)."""
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 6:
                    raise AnnotationFormatError("expected 'fx fy cx cy width height'", lineno)
                try:
                    fx, fy, cx, cy = map(float, parts[:4])
                    return cls(fx, fy, cx, cy, int(parts[4]), int(parts[5]))
                except ValueError as exc:
                    raise AnnotationFormatError(str(exc), lineno) from None
        raise AnnotationFormatError(f"{path}: no intrinsics found")


@dataclass(frozen=True, eq=False)
class MeshFrame:
    """Hand mesh vertices in camera coordinates (metres, Z forward)."""

    vertices: np.ndarray
    intrinsics: Intrinsics
    image_path: str = "frame.png"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or not len(v):
            raise ContractError(f"vertices must be an (N, 3) array, got {v.shape}")
        if not np.all(v[:, 2] > 0):
            bad = np.flatnonzero(~(v[:, 2] > 0))
            raise ContractError(f"vertices {bad[:5].tolist()} are not in front of the camera")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def load(cls, path, intrinsics: Intrinsics | None = None) -> "MeshFrame":
        """Load an ``.npz`` holding ``vertices`` and optionally ``fx, fy, cx, cy, width, height, image_path``."""
        with np.load(path, allow_pickle=False) as z:
            if intrinsics is None:
                try:
                    intrinsics = Intrinsics(*(float(z[k]) for k in ("fx", "fy", "cx", "cy")),
                                            int(z["width"]), int(z["height"]))
                except KeyError as exc:
                    raise ContractError(f"{path}: no intrinsics in file and none supplied ({exc})") from None
            image_path = str(z["image_path"]) if "image_path" in z else Path(path).with_suffix(".png").name
            return cls(z["vertices"], intrinsics, image_path)

    def save(self, path):
        k = self.intrinsics
        np.savez(path, vertices=self.vertices, fx=k.fx, fy=k.fy, cx=k.cx, cy=k.cy,
                 width=k.width, height=k.height, image_path=self.image_path)


def validate_vertex_map(vmap, vertex_count=None) -> np.ndarray:
    vmap = np.asarray(vmap)
    if vmap.shape != (NUM_KEYPOINTS, VERTICES_PER_JOINT):
        raise ContractError(f"vertex map must be {NUM_KEYPOINTS}x{VERTICES_PER_JOINT}, got {vmap.shape}")
    if not np.issubdtype(vmap.dtype, np.integer):
        raise ContractError("vertex map entries must be integers")
    for j, row in enumerate(vmap):
        for idx in row:
            if idx < 0 or (vertex_count is not None and idx >= vertex_count):
                raise ContractError(f"joint {j}: vertex index {int(idx)} out of range for {vertex_count} vertices")
    return vmap


def read_vertex_map(path) -> np.ndarray:
    """21 lines of 10 whitespace-separated vertex indices."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != VERTICES_PER_JOINT:
                raise AnnotationFormatError(f"expected {VERTICES_PER_JOINT} indices, got {len(parts)}", lineno)
            try:
                rows.append([int(p) for p in parts])
            except ValueError as exc:
                raise AnnotationFormatError(str(exc), lineno) from None
    if len(rows) != NUM_KEYPOINTS:
        raise AnnotationFormatError(f"{path}: expected {NUM_KEYPOINTS} joint lines, got {len(rows)}")
    return validate_vertex_map(np.array(rows, dtype=np.int64))


def write_vertex_map(vmap, path):
    vmap = validate_vertex_map(vmap)
    with open(path, "w") as f:
        for row in vmap:
            f.write(" ".join(str(int(i)) for i in row) + "\n")


def joints_from_vertices(mesh: MeshFrame, vmap) -> np.ndarray:
    """``(21, 3)`` joint positions, each the mean of its 10 mapped vertices."""
    vmap = validate_vertex_map(vmap, len(mesh.vertices))
    return mesh.vertices[vmap].mean(axis=1)


def project(joints3d, intrinsics: Intrinsics) -> np.ndarray:
    """Pinhole projection ``u = fx X/Z + cx``, ``v = fy Y/Z + cy``."""
    p = np.asarray(joints3d, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ContractError(f"expected (N, 3) points, got {p.shape}")
    behind = np.flatnonzero(~(p[:, 2] > 0))
    if len(behind):
        raise ContractError(f"joints {behind.tolist()} are behind the camera (Z <= 0)")
    u = intrinsics.fx * p[:, 0] / p[:, 2] + intrinsics.cx
    v = intrinsics.fy * p[:, 1] / p[:, 2] + intrinsics.cy
    return np.stack([u, v], axis=1)


def record_from_mesh(mesh: MeshFrame, vmap, image_path=None) -> AnnotationRecord:
    """Annotation for one mesh frame; joints projecting outside the image are marked invisible."""
    k = mesh.intrinsics
    xy = project(joints_from_vertices(mesh, vmap), k)
    inside = (xy[:, 0] >= 0) & (xy[:, 0] <= k.width - 1) & (xy[:, 1] >= 0) & (xy[:, 1] <= k.height - 1)
    return AnnotationRecord(image_path or mesh.image_path, k.width, k.height, xy,
                            visible=inside, box=BoundingBox.from_points(xy) if _spread(xy) else None)


def _spread(xy):
    return np.ptp(xy[:, 0]) > 0 and np.ptp(xy[:, 1]) > 0


@dataclass(frozen=True, eq=False)
class AugmentedSample:
    image: np.ndarray
    record: AnnotationRecord
    transform: CropTransform
    scale: float
    shift: tuple


def _variant_path(path, i):
    root, ext = os.path.splitext(path)
    return f"{root}_aug{i:02d}{ext or '.png'}"


def augment(record: AnnotationRecord, image, seed, count=AUGMENT_COUNT, size=ROI_SIZE,
            scale_range=SCALE_RANGE, jitter=JITTER, max_retries=10) -> list[AugmentedSample]:
    """Random scale-and-crop variants of one annotated image, resized to ``size``.

    The base crop is the square of side ``max(w, h)`` centred on the image.
    Each variant zooms by a factor drawn from ``scale_range`` (side divided
    by the factor) and shifts the centre by up to ``jitter`` of the crop
    side per axis. A variant with more than half its landmarks outside the
    crop is redrawn, up to ``max_retries`` times, and otherwise dropped.

    Returns:
        Variants in draw order. ``variant.transform.to_roi(record.xy)``
        reproduces ``variant.record.xy``.
    """
    image = T.as_tensor(image, "image")
    h, w, _ = image.shape
    if (w, h) != (record.width, record.height):
        raise ContractError(f"image is {w}x{h} but record says {record.width}x{record.height}")
    vis = record.visibility
    pts = record.xy[vis]
    if np.any(pts < 0) or np.any(pts[:, 0] > w - 1) or np.any(pts[:, 1] > h - 1):
        raise ContractError(f"{record.image_path}: visible landmarks must lie inside the image")
    rng = np.random.default_rng(seed)
    base = float(max(w, h))
    cx, cy = w / 2, h / 2
    out = []
    for i in range(count):
        for _ in range(max_retries + 1):
            s = float(rng.uniform(*scale_range))
            side = base / s
            dx, dy = (float(v) for v in rng.uniform(-jitter, jitter, 2) * side)
            box = BoundingBox(cx + dx - side / 2, cy + dy - side / 2, cx + dx + side / 2, cy + dy + side / 2)
            transform = CropTransform.for_square(box, size, image_size=(w, h))
            xy = transform.to_roi(record.xy)
            inside = (xy >= 0).all(axis=1) & (xy <= size - 1).all(axis=1)
            if np.count_nonzero(~inside & vis) <= MAX_OUT_OF_FRAME * max(np.count_nonzero(vis), 1):
                break
        else:
            logger.warning("%s: variant %d dropped, landmarks kept leaving the crop", record.image_path, i)
            continue
        ys, xs = transform.roi_axes()
        rec = AnnotationRecord(_variant_path(record.image_path, i), size, size, xy, visible=inside & vis)
        out.append(AugmentedSample(T.sample_separable(image, ys, xs), rec, transform, s, (dx, dy)))
    return out
