"""Latency harness: crop + forward + decode per frame, image decode excluded."""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox
from .tracking import DEFAULT_MARGIN, localize


@dataclass
class BenchReport:
    iterations: int
    threads: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    fps: float

    def to_text(self) -> str:
        return (
            f"iterations: {self.iterations}\nthreads: {self.threads}\n"
            f"mean_ms: {self.mean_ms:.3f}\nmedian_ms: {self.median_ms:.3f}\n"
            f"p95_ms: {self.p95_ms:.3f}\nfps: {self.fps:.2f}\n"
        )


def summarize(latencies_ms, threads=1) -> BenchReport:
    lat = [float(v) for v in latencies_ms]
    if not lat:
        raise ValueError("no timings to summarise")
    mean = statistics.fmean(lat)
    return BenchReport(
        iterations=len(lat),
        threads=threads,
        mean_ms=mean,
        median_ms=statistics.median(lat),
        p95_ms=float(np.percentile(lat, 95)),
        fps=1000.0 / mean,
    )


def benchmark(model, image=None, box=None, iterations=100, warmup=2, threads=1, margin=DEFAULT_MARGIN) -> BenchReport:
    """Time ``iterations`` frames after ``warmup`` untimed runs.

    With ``threads > 1`` frames run concurrently on the shared model and each
    frame's own wall time is recorded.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if image is None:
        image = np.random.default_rng(0).uniform(0, 1, (480, 640, 3)).astype(np.float32)
    if box is None:
        h, w = image.shape[:2]
        box = BoundingBox(w * 0.3, h * 0.3, w * 0.7, h * 0.7)

    def one(_=None):
        t0 = time.perf_counter()
        localize(model, image, box, margin)
        return (time.perf_counter() - t0) * 1000.0

    for _ in range(warmup):
        one()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            lat = list(pool.map(one, range(iterations)))
    else:
        lat = [one() for _ in range(iterations)]
    return summarize(lat, threads)
