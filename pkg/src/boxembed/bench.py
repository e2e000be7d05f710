"""Timing harness for the pixel-assignment kernel.

Only :func:`boxembed.grouping.assign_pixels` is timed; scene generation and
oracle outputs are built beforehand. Each measurement runs one discarded
warm-up call followed by ``repeats`` timed calls and keeps the median.
"""

from __future__ import annotations

import csv
import gc
import statistics
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from typing import Sequence, TextIO

import numpy as np

from .geometry import Box
from .grouping import GroupingConfig, assign_pixels
from .maps import OffsetMap, ProbMap
from .synth import generate_scene, oracle_outputs


@dataclass(frozen=True)
class BenchRecord:
    height: int
    width: int
    n_instances: int
    n_person_pixels: int
    wall_time: float
    repeats: int

    @property
    def work(self) -> int:
        return self.n_person_pixels * self.n_instances


@dataclass(frozen=True)
class FitReport:
    """Least-squares fit ``wall_time ~ slope * (N_p * M) + intercept``."""

    slope: float
    intercept: float
    r2: float
    n_points: int


@contextmanager
def _gc_paused():
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def _timed_call(prob, offsets, boxes, cfg, n_threads) -> float:
    t0 = time.perf_counter()
    assign_pixels(prob, offsets, boxes, cfg, n_threads=n_threads)
    return time.perf_counter() - t0


def time_assignment(
    prob: ProbMap,
    offsets: OffsetMap,
    boxes: Sequence[Box],
    cfg: GroupingConfig = GroupingConfig(),
    repeats: int = 5,
    n_threads: int = 1,
) -> float:
    """Median wall time in seconds of ``assign_pixels`` over ``repeats`` runs."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    assign_pixels(prob, offsets, boxes, cfg, n_threads=n_threads)
    with _gc_paused():
        times = [_timed_call(prob, offsets, boxes, cfg, n_threads) for _ in range(repeats)]
    return statistics.median(times)


def bench_scene(size: int, n_instances: int, seed: int, person_fraction: float = 0.25):
    """Square oracle scene whose instances cover roughly ``person_fraction``.

    Returns ``(prob, offsets, boxes)`` with the ground-truth boxes standing in
    for the global boxes, so ``M`` is exactly ``n_instances``.
    """
    side = size * np.sqrt(person_fraction / n_instances)
    lo, hi = max(2, int(side * 0.8)), max(3, int(side * 1.2))
    scene = generate_scene(
        size, size, n_instances, "rectangle", seed, size_range=(lo, hi), min_visible=0.3, max_retries=2000
    )
    prob, offsets = oracle_outputs(scene)
    return prob, offsets, [a.box for a in scene.instances]


def fit_linear(records: Sequence[BenchRecord]) -> FitReport:
    x = np.array([r.work for r in records], dtype=np.float64)
    y = np.array([r.wall_time for r in records], dtype=np.float64)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitReport(float(slope), float(intercept), r2, len(records))


def run_sweep(
    sizes: Sequence[int] = (128, 256, 384, 512),
    instance_counts: Sequence[int] = (5, 10, 20),
    seed: int = 0,
    repeats: int = 5,
    n_threads: int = 1,
    cfg: GroupingConfig = GroupingConfig(),
) -> tuple[list[BenchRecord], FitReport]:
    """Time assignment over every (size, instance count) pair and fit it.

    Repeats are interleaved round-robin across the points so that slow drift in
    machine load spreads evenly over the sweep instead of biasing single points.
    """
    if repeats < 5:
        raise ValueError("a sweep needs at least 5 repeats per point")
    points = []
    for size in sizes:
        for n in instance_counts:
            prob, offsets, boxes = bench_scene(size, n, seed)
            n_p = int(np.count_nonzero(prob.data >= cfg.seg_threshold))
            points.append((size, prob, offsets, boxes, n_p))

    times: list[list[float]] = [[] for _ in points]
    for _, prob, offsets, boxes, _ in points:  # warm-up, discarded
        assign_pixels(prob, offsets, boxes, cfg, n_threads=n_threads)
    with _gc_paused():
        for _ in range(repeats):
            for k, (_, prob, offsets, boxes, _) in enumerate(points):
                times[k].append(_timed_call(prob, offsets, boxes, cfg, n_threads))

    records = [
        BenchRecord(size, size, len(boxes), n_p, statistics.median(t), repeats)
        for (size, _, _, boxes, n_p), t in zip(points, times)
    ]
    return records, fit_linear(records)


CSV_FIELDS = tuple(f.name for f in fields(BenchRecord))


def write_csv(records: Sequence[BenchRecord], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})


def read_csv(stream: TextIO) -> list[BenchRecord]:
    rows = csv.DictReader(stream)
    if tuple(rows.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {rows.fieldnames}")
    return [
        BenchRecord(
            int(r["height"]),
            int(r["width"]),
            int(r["n_instances"]),
            int(r["n_person_pixels"]),
            float(r["wall_time"]),
            int(r["repeats"]),
        )
        for r in rows
    ]
