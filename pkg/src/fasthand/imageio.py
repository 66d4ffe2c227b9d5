"""Lossless raster I/O (PNG, PPM) and overlay drawing."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .heatmap import SKELETON_EDGES


def read_image(path) -> np.ndarray:
    """Load an image as a float32 HxWx3 RGB tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def to_uint8(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_image(path, image):
    """Write a [0, 1] float tensor; the format follows the file suffix (.png, .ppm)."""
    Image.fromarray(to_uint8(image)).save(path)


def hot_colormap(v) -> np.ndarray:
    """Black -> red -> yellow -> white ramp for values in [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    return np.stack([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)


def blend_heatmaps(image, heatmaps) -> np.ndarray:
    """Paint the per-pixel maximum over heatmap channels onto ``image``.

    The combined map is resized to the image when sizes differ; each pixel
    is blended toward the colour-mapped value with opacity equal to it.
    """
    from .tensor import resize_bilinear

    image = np.asarray(image, dtype=np.float32)
    combined = np.clip(np.asarray(heatmaps, dtype=np.float32).max(axis=2), 0, 1)[..., None]
    h, w = image.shape[:2]
    if combined.shape[:2] != (h, w):
        combined = resize_bilinear(combined, h, w)
    alpha = combined
    return (1 - alpha) * image + alpha * hot_colormap(combined[..., 0])


def draw_skeleton(image, xy, visible=None, radius=2) -> Image.Image:
    """Overlay landmarks and the 20 bones on a copy of ``image``."""
    im = Image.fromarray(to_uint8(image))
    draw = ImageDraw.Draw(im)
    xy = np.asarray(xy, dtype=np.float64)
    vis = np.ones(len(xy), bool) if visible is None else np.asarray(visible, bool)
    for a, b in SKELETON_EDGES:
        if vis[a] and vis[b]:
            draw.line([tuple(xy[a]), tuple(xy[b])], fill=(0, 255, 0), width=1)
    for i, (x, y) in enumerate(xy):
        if vis[i]:
            draw.ellipse([x - radius, y - radius, x + radius, y + radius], fill=(255, 0, 0))
    return im
