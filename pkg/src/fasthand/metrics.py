"""
Landmark accuracy metrics: SSE, EPE and PCK.

All distances are divided by ``max(w, h)`` of the original image, so every
metric is invariant to uniformly rescaling coordinates and image size.
Landmarks flagged invisible in the ground truth are left out; per-joint
denominators shrink accordingly.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import AnnotationRecord
from .errors import ContractError
from .model import NUM_KEYPOINTS

DEFAULT_SIGMAS = (0.1, 0.2, 0.3)
ROOT = 0


@dataclass(frozen=True, eq=False)
class EvalSample:
    gt: np.ndarray
    pred: np.ndarray
    width: int
    height: int
    visible: np.ndarray | None = None

    def __post_init__(self):
        for name in ("gt", "pred"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (NUM_KEYPOINTS, 2):
                raise ContractError(f"{name}: need {NUM_KEYPOINTS}x2 landmarks, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.width < 1 or self.height < 1:
            raise ContractError(f"image size must be positive, got {self.width}x{self.height}")
        vis = np.ones(NUM_KEYPOINTS, bool) if self.visible is None else np.asarray(self.visible, bool)
        object.__setattr__(self, "visible", vis)


def _stack(samples: Sequence[EvalSample]):
    if not len(samples):
        raise ContractError("metrics need at least one sample")
    gt = np.stack([s.gt for s in samples])
    pred = np.stack([s.pred for s in samples])
    norm = np.array([max(s.width, s.height) for s in samples], dtype=np.float64)[:, None]
    vis = np.stack([s.visible for s in samples])
    return gt, pred, norm, vis


def sse(samples: Sequence[EvalSample]) -> float:
    """Mean over samples of the summed squared normalised landmark error."""
    gt, pred, norm, vis = _stack(samples)
    d = (gt - pred) / norm[..., None]
    per_landmark = (d**2).sum(axis=2)
    return float(np.where(vis, per_landmark, 0.0).sum(axis=1).sum() / len(samples))


def epe(samples: Sequence[EvalSample]) -> float:
    """Mean normalised root-relative end-point error over all landmarks.

    The root's own (zero) term is counted, so a fully visible dataset
    divides by ``21 * D``. Samples whose root is invisible are skipped.
    """
    gt, pred, norm, vis = _stack(samples)
    rel = (gt - gt[:, ROOT : ROOT + 1]) - (pred - pred[:, ROOT : ROOT + 1])
    err = np.linalg.norm(rel / norm[..., None], axis=2)
    mask = vis & vis[:, ROOT : ROOT + 1]
    n = mask.sum()
    if n == 0:
        raise ContractError("no sample has a visible root landmark")
    return float(np.where(mask, err, 0.0).sum() / n)


def normalized_errors(samples: Sequence[EvalSample]) -> np.ndarray:
    """``(D, 21)`` L2 landmark errors divided by ``max(w, h)``."""
    gt, pred, norm, _ = _stack(samples)
    return np.linalg.norm(gt - pred, axis=2) / norm


def pck(samples: Sequence[EvalSample], sigma: float):
    """Fraction of landmarks within ``sigma`` (inclusive) of the ground truth.

    Returns:
        ``(overall, per_joint)``: the 21 per-joint fractions and their mean.
        A joint that is never visible gets NaN and is left out of the mean.
    """
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    _, _, _, vis = _stack(samples)
    hit = (normalized_errors(samples) <= sigma) & vis
    counts = vis.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_joint = np.where(counts > 0, hit.sum(axis=0) / np.maximum(counts, 1), np.nan)
    valid = per_joint[~np.isnan(per_joint)]
    overall = float(valid.mean()) if len(valid) else float("nan")
    return overall, per_joint


@dataclass
class EvalReport:
    sse: float
    epe: float
    pck: dict = field(default_factory=dict)
    per_joint: dict = field(default_factory=dict)
    count: int = 0

    def to_text(self, digits=4) -> str:
        lines = [f"samples: {self.count}", f"SSE: {self.sse:.{digits}f}", f"EPE: {self.epe:.{digits}f}"]
        for sigma in sorted(self.pck):
            lines.append(f"PCK@{sigma:g}: {self.pck[sigma]:.{digits}f}")
        for sigma in sorted(self.per_joint):
            vals = " ".join(f"{v:.{digits}f}" for v in self.per_joint[sigma])
            lines.append(f"PCK@{sigma:g} per joint: {vals}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "samples": self.count,
            "sse": self.sse,
            "epe": self.epe,
            "pck": {f"{s:g}": v for s, v in sorted(self.pck.items())},
            "per_joint": {f"{s:g}": [None if np.isnan(v) else float(v) for v in pj]
                          for s, pj in sorted(self.per_joint.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        """CSV rows: one per sigma with the overall and per-joint PCK."""
        header = ["sigma", "pck"] + [f"j{i}" for i in range(NUM_KEYPOINTS)]
        rows = [",".join(header)]
        for s in sorted(self.pck):
            rows.append(",".join([f"{s:g}", repr(self.pck[s])] + [repr(float(v)) for v in self.per_joint[s]]))
        return "\n".join(rows) + "\n"


def report(samples: Sequence[EvalSample], sigmas=DEFAULT_SIGMAS) -> EvalReport:
    rep = EvalReport(sse(samples), epe(samples), count=len(samples))
    for s in sigmas:
        rep.pck[float(s)], rep.per_joint[float(s)] = pck(samples, float(s))
    return rep


def samples_from_records(ground_truth: Sequence[AnnotationRecord], predictions: Sequence[AnnotationRecord]):
    """Pair records by index; image paths must agree.

    Raises:
        ContractError: counts differ or a pair refers to different images;
            the message names the first offending index.
    """
    gt, pred = list(ground_truth), list(predictions)
    for i, (g, p) in enumerate(zip(gt, pred)):
        if g.image_path != p.image_path:
            raise ContractError(f"record {i}: ground truth {g.image_path!r} vs prediction {p.image_path!r}")
    if len(gt) != len(pred):
        raise ContractError(
            f"ground truth has {len(gt)} records, predictions {len(pred)}; first unmatched index {min(len(gt), len(pred))}"
        )
    return [EvalSample(g.xy, p.xy, g.width, g.height, g.visible) for g, p in zip(gt, pred)]


def predict_records(model, ground_truth: Sequence[AnnotationRecord], image_root=None, margin=None,
                    subpixel=True, threads=1) -> list[AnnotationRecord]:
    """Run the landmark network on every ground-truth image, cropping around its hand box."""
    from .imageio import read_image
    from .tracking import DEFAULT_MARGIN, localize

    margin = DEFAULT_MARGIN if margin is None else margin

    def one(rec: AnnotationRecord):
        path = rec.image_path if image_root is None else os.path.join(image_root, rec.image_path)
        kps, _, _ = localize(model, read_image(path), rec.hand_box(), margin, subpixel)
        return AnnotationRecord(rec.image_path, rec.width, rec.height, kps.xy)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, ground_truth))
    return [one(r) for r in ground_truth]


def evaluate(predictions, ground_truth: Sequence[AnnotationRecord], sigmas=DEFAULT_SIGMAS, **predict_kw) -> EvalReport:
    """Score predictions against ground truth.

    ``predictions`` is either a sequence of ``AnnotationRecord`` (e.g. read
    from a prediction file) or a ``Model``, in which case it is run over
    the ground-truth images first (see ``predict_records``).
    """
    from .model import Model

    if isinstance(predictions, Model):
        predictions = predict_records(predictions, ground_truth, **predict_kw)
    return report(samples_from_records(ground_truth, predictions), sigmas)
