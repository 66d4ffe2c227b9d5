"""Framework-free 2D hand landmark estimation runtime."""

from .errors import (
    AnnotationFormatError,
    ConfigError,
    ContractError,
    FastHandError,
    HandLostError,
    WeightFormatError,
)
from .geometry import BoundingBox, CropTransform
from .heatmap import KeypointSet, decode_peaks, map_keypoints, render_gaussian
from .metrics import EvalSample, epe, evaluate, pck, sse
from .model import PRESETS, Model, ModelConfig, build_fasthand, forward
from .tracking import Pipeline, StaticDetections, crop_and_resize, localize
from .weights import load_model, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "AnnotationFormatError", "BoundingBox", "ConfigError", "ContractError", "CropTransform",
    "EvalSample", "FastHandError", "HandLostError", "KeypointSet", "Model", "ModelConfig",
    "PRESETS", "Pipeline", "StaticDetections", "WeightFormatError", "build_fasthand",
    "crop_and_resize", "decode_peaks", "epe", "evaluate", "forward", "load_model",
    "load_weights", "localize", "map_keypoints", "pck", "render_gaussian", "save_weights", "sse",
]
