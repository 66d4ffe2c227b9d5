"""Deterministic synthetic hand frame and mesh used by the bundled demo data and tests."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .annotations import AnnotationRecord
from .dataset import VERTICES_PER_JOINT, Intrinsics, MeshFrame
from .geometry import BoundingBox
from .heatmap import SKELETON_EDGES
from .model import NUM_KEYPOINTS

FRAME_SIZE = (320, 240)
DEPTH = 0.5


def hand_landmarks(width=FRAME_SIZE[0], height=FRAME_SIZE[1]) -> np.ndarray:
    """An open right hand, wrist at the bottom centre, fingers fanned upward."""
    wrist = np.array([0.5 * width, 0.85 * height])
    xy = [wrist]
    scale = 0.16 * height
    # per finger: base angle (deg from vertical) and phalanx lengths
    fingers = [(-55, (0.9, 0.7, 0.55, 0.45)), (-18, (1.8, 0.75, 0.5, 0.4)),
               (0, (1.8, 0.85, 0.55, 0.45)), (16, (1.7, 0.75, 0.5, 0.4)), (32, (1.5, 0.6, 0.4, 0.35))]
    for angle, lengths in fingers:
        theta = np.deg2rad(angle)
        step = np.array([np.sin(theta), -np.cos(theta)])
        p = wrist.copy()
        for length in lengths:
            p = p + length * scale * step
            xy.append(p.copy())
    return np.array(xy)


def hand_frame(seed=0, width=FRAME_SIZE[0], height=FRAME_SIZE[1]):
    """``(image, record)``: a drawn hand on a noisy background and its exact annotation."""
    rng = np.random.default_rng(seed)
    xy = hand_landmarks(width, height)
    bg = (0.25 + 0.1 * rng.standard_normal((height, width, 3))).clip(0, 1)
    im = Image.fromarray((bg * 255).astype(np.uint8))
    draw = ImageDraw.Draw(im)
    skin = (224, 172, 140)
    palm = [tuple(xy[i]) for i in (0, 1, 5, 9, 13, 17)]
    draw.polygon(palm, fill=skin)
    for a, b in SKELETON_EDGES:
        draw.line([tuple(xy[a]), tuple(xy[b])], fill=skin, width=9)
    for x, y in xy:
        draw.ellipse([x - 5, y - 5, x + 5, y + 5], fill=skin)
    image = np.asarray(im, dtype=np.float32) / 255.0
    rec = AnnotationRecord("synthetic_hand.png", width, height, xy, box=BoundingBox.from_points(xy))
    return image, rec


def example_vertex_map() -> np.ndarray:
    """Joint j owns vertices ``10j .. 10j+9``."""
    return np.arange(NUM_KEYPOINTS * VERTICES_PER_JOINT).reshape(NUM_KEYPOINTS, VERTICES_PER_JOINT)


def hand_mesh(width=FRAME_SIZE[0], height=FRAME_SIZE[1], depth=DEPTH, seed=0) -> MeshFrame:
    """A point cloud whose per-joint vertex means back-project the synthetic landmarks.

    Each joint's ten vertices are symmetric offsets around it, so their mean
    is the joint itself.
    """
    k = Intrinsics(300.0, 300.0, width / 2, height / 2, width, height)
    xy = hand_landmarks(width, height)
    joints = np.column_stack([(xy[:, 0] - k.cx) * depth / k.fx, (xy[:, 1] - k.cy) * depth / k.fy,
                              np.full(len(xy), depth)])
    rng = np.random.default_rng(seed)
    half = rng.uniform(-0.004, 0.004, (NUM_KEYPOINTS, VERTICES_PER_JOINT // 2, 3))
    offsets = np.concatenate([half, -half], axis=1)
    vertices = (joints[:, None, :] + offsets).reshape(-1, 3)
    return MeshFrame(vertices, k, "synthetic_hand.png")
