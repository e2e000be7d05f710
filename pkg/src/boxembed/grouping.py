"""Instance grouping from a probability map and a dense offset field.

Two stages:

1. **Global boxes.** Every local maximum of the probability map with value
   ``>= t_c`` contributes the box decoded at that pixel, scored by the peak
   probability. Greedy NMS turns these candidates into the global boxes.
2. **Pixel assignment.** Each pixel with probability ``>= seg_threshold``
   decodes its own box and joins the global box it overlaps most, provided
   that IoU reaches ``t_iou``; otherwise it is dropped as a false positive.
   An instance's score is the mean probability over its pixels.

Assignment costs ``O(N_p * M)`` for ``N_p`` person pixels and ``M`` global
boxes: one vectorised IoU sweep over the pixel boxes per global box.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import AnchorConfig, Box, decode_array, encode_array, to_corners
from .maps import InstanceLabelMap, OffsetMap, ProbMap, ValidityMask

# keeps exp() of predicted log-scales finite in the dense decode
_MAX_LOG_SCALE = 30.0


@dataclass(frozen=True)
class GroupingConfig:
    t_c: float = 0.6
    nms_iou: float = 0.4
    t_iou: float = 0.5
    seg_threshold: float = 0.5
    max_detections: int = 20
    anchor: AnchorConfig = field(default_factory=AnchorConfig)

    def __post_init__(self):
        for name in ("t_c", "nms_iou", "t_iou", "seg_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_detections < 1:
            raise ValueError(f"max_detections must be >= 1, got {self.max_detections}")


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    pixel_count: int
    instance_id: int


@dataclass(frozen=True)
class GroupingResult:
    """Detections in descending score order; ``instance_id`` k labels ``labels == k``."""

    detections: list[Detection]
    labels: InstanceLabelMap

    def mask(self, instance_id: int) -> np.ndarray:
        return self.labels.data == instance_id

    def __eq__(self, other):
        return (
            isinstance(other, GroupingResult)
            and self.detections == other.detections
            and self.labels == other.labels
        )


def _check_shapes(prob: ProbMap, offsets: OffsetMap) -> None:
    if prob.shape != offsets.shape:
        raise ValueError(f"probability map {prob.shape} and offset map {offsets.shape} differ in size")


# 8-neighbourhood split into row-major predecessors and successors of a pixel
_EARLIER = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
_LATER = ((0, 1), (1, -1), (1, 0), (1, 1))


def find_peaks(prob: ProbMap, t_c: float) -> list[tuple[tuple[int, int], float]]:
    """Local maxima of ``prob`` at or above ``t_c``.

    A pixel is a peak when it is ``>=`` all of its 8 neighbours and strictly
    ``>`` the four that precede it in row-major order, so a plateau is
    represented by its first pixel(s) in scan order. Neighbours outside the
    map are ignored.

    Returns:
        ``[((row, col), value), ...]`` sorted by value descending, ties in
        row-major order.
    """
    v = prob.data
    h, w = v.shape
    padded = np.full((h + 2, w + 2), -np.inf, dtype=np.float32)
    padded[1:-1, 1:-1] = v
    is_peak = v >= t_c
    for dr, dc in _EARLIER:
        is_peak &= v > padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    for dr, dc in _LATER:
        is_peak &= v >= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    flat = np.flatnonzero(is_peak)
    scores = v.ravel()[flat]
    order = np.lexsort((flat, -scores.astype(np.float64)))
    return [((int(flat[k] // w), int(flat[k] % w)), float(scores[k])) for k in order]


def nms(
    candidates: Sequence[tuple[Box, float]],
    iou_threshold: float,
    max_detections: int,
) -> list[tuple[Box, float]]:
    """Greedy non-maximum suppression.

    Candidates are visited by descending score (stable, so equal scores keep
    their input order). Each kept box removes every remaining candidate whose
    IoU with it exceeds ``iou_threshold``. Stops after ``max_detections`` keeps.
    """
    if not candidates:
        return []
    scores = np.array([s for _, s in candidates], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    corners = to_corners(np.array([b.as_array() for b, _ in candidates]))[order]
    areas = (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])

    keep = []
    alive = np.arange(order.size)
    while alive.size and len(keep) < max_detections:
        i = alive[0]
        keep.append(order[i])
        rest = alive[1:]
        iw = np.minimum(corners[i, 2], corners[rest, 2]) - np.maximum(corners[i, 0], corners[rest, 0])
        ih = np.minimum(corners[i, 3], corners[rest, 3]) - np.maximum(corners[i, 1], corners[rest, 1])
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        overlap = inter / (areas[i] + areas[rest] - inter)
        alive = rest[overlap <= iou_threshold]
    return [candidates[k] for k in keep]


def select_global_boxes(prob: ProbMap, offsets: OffsetMap, cfg: GroupingConfig) -> list[tuple[Box, float]]:
    _check_shapes(prob, offsets)
    peaks = find_peaks(prob, cfg.t_c)
    if not peaks:
        return []
    rows = np.array([p[0][0] for p in peaks])
    cols = np.array([p[0][1] for p in peaks])
    boxes = decode_pixel_boxes(offsets, rows, cols, cfg.anchor)
    candidates = [(Box(*map(float, b)), score) for b, (_, score) in zip(boxes, peaks)]
    return nms(candidates, cfg.nms_iou, cfg.max_detections)


def _best_box(
    x0: np.ndarray,
    y0: np.ndarray,
    x1: np.ndarray,
    y1: np.ndarray,
    gcorners: np.ndarray,
    gareas: np.ndarray,
    t_iou: float,
) -> np.ndarray:
    """Index of the best-overlapping global box per pixel box, -1 below ``t_iou``.

    Pixel boxes come as four contiguous corner arrays. Ties keep the lower
    global index.
    """
    n = x0.size
    parea = np.subtract(x1, x0)
    parea *= np.subtract(y1, y0)
    iw, ih, tmp = np.empty(n), np.empty(n), np.empty(n)
    best_iou = np.empty(n)
    best = np.zeros(n, dtype=np.intp)
    better = np.empty(n, dtype=bool)
    for j in range(gcorners.shape[0]):
        gx0, gy0, gx1, gy1 = gcorners[j]
        np.minimum(x1, gx1, out=iw)
        iw -= np.maximum(x0, gx0, out=tmp)
        np.maximum(iw, 0.0, out=iw)
        np.minimum(y1, gy1, out=ih)
        ih -= np.maximum(y0, gy0, out=tmp)
        np.maximum(ih, 0.0, out=ih)
        iw *= ih  # intersection
        np.add(parea, gareas[j], out=tmp)
        tmp -= iw  # union
        if j == 0:
            # NaN (from overflowing pixel boxes) must not block later boxes
            np.divide(iw, tmp, out=best_iou)
            np.copyto(best_iou, -1.0, where=np.isnan(best_iou))
            continue
        np.divide(iw, tmp, out=iw)
        np.greater(iw, best_iou, out=better)
        np.copyto(best_iou, iw, where=better)
        np.copyto(best, j, where=better)
    np.copyto(best, -1, where=best_iou < t_iou)
    return best


def decode_pixel_boxes(offsets: OffsetMap, rows: np.ndarray, cols: np.ndarray, anchor: AnchorConfig) -> np.ndarray:
    """Center-form boxes predicted at the given pixels, float64 ``(n, 4)``."""
    off = offsets.data[rows, cols].astype(np.float64)
    np.clip(off[:, 2:], -_MAX_LOG_SCALE, _MAX_LOG_SCALE, out=off[:, 2:])
    anchors = np.empty_like(off)
    anchors[:, 0] = cols
    anchors[:, 1] = rows
    anchors[:, 2] = anchor.width
    anchors[:, 3] = anchor.height
    return decode_array(off, anchors)


def _pixel_corners(offsets: OffsetMap, flat: np.ndarray, anchor: AnchorConfig):
    """Corner arrays ``(x0, y0, x1, y1)`` of the boxes predicted at flat pixel indices.

    Same arithmetic as :func:`decode_pixel_boxes` followed by
    :func:`~boxembed.geometry.to_corners`, laid out as contiguous 1-D arrays.
    Log-scales are not clamped here: an overflowing box gets IoU 0 (or NaN)
    against every global box and so is never assigned.
    """
    rows = flat // offsets.width
    cols = flat - rows * offsets.width
    off = np.ascontiguousarray(np.take(offsets.data.reshape(-1, 4), flat, axis=0).T, dtype=np.float64)
    cx, cy, half_w, half_h = off
    cx *= anchor.width
    cx += cols
    cy *= anchor.height
    cy += rows
    with np.errstate(over="ignore"):
        np.exp(off[2:], out=off[2:])
    # (a * e) / 2 == e * (a / 2) exactly, so this matches the center-form decode
    half_w *= anchor.width / 2.0
    half_h *= anchor.height / 2.0
    return cx - half_w, cy - half_h, cx + half_w, cy + half_h


def assign_pixels(
    prob: ProbMap,
    offsets: OffsetMap,
    global_boxes: Sequence[Box],
    cfg: GroupingConfig,
    *,
    ignore: ValidityMask | None = None,
    n_threads: int = 1,
) -> GroupingResult:
    """Assign person pixels to global boxes and score the resulting instances.

    Args:
        global_boxes: typically the boxes from :func:`select_global_boxes`, in
            descending confidence order; equal-IoU ties go to the earlier box.
        ignore: optional mask of pixels excluded from the person set, e.g.
            known crowd regions.
        n_threads: split the per-pixel sweep over this many threads. Output is
            identical for any thread count.

    Detections that end up with no pixels are dropped; the remaining ones are
    numbered 1..K by descending score (ties by global box order).
    """
    _check_shapes(prob, offsets)
    h, w = prob.shape
    person = prob.data >= cfg.seg_threshold
    if ignore is not None:
        if ignore.shape != prob.shape:
            raise ValueError(f"ignore mask {ignore.shape} does not match map {prob.shape}")
        person &= ~ignore.data
    flat = np.flatnonzero(person)

    m = len(global_boxes)
    if m == 0 or flat.size == 0:
        return GroupingResult([], InstanceLabelMap(np.zeros((h, w), dtype=np.uint32)))

    gcorners = to_corners(np.array([b.as_array() for b in global_boxes]))
    gareas = (gcorners[:, 2] - gcorners[:, 0]) * (gcorners[:, 3] - gcorners[:, 1])
    corners = _pixel_corners(offsets, flat, cfg.anchor)

    if n_threads > 1 and flat.size >= 2 * n_threads:
        bounds = np.linspace(0, flat.size, n_threads + 1).astype(np.int64)
        spans = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = pool.map(lambda sl: _best_box(*(c[sl] for c in corners), gcorners, gareas, cfg.t_iou), spans)
            best = np.concatenate(list(parts))
    else:
        best = _best_box(*corners, gcorners, gareas, cfg.t_iou)

    # slot 0 collects unassigned pixels; bincount accumulates weights in float64
    best += 1
    counts = np.bincount(best, minlength=m + 1)[1:]
    sums = np.bincount(best, weights=np.take(prob.data.ravel(), flat), minlength=m + 1)[1:]

    used = np.flatnonzero(counts > 0)
    scores = sums[used] / counts[used]
    ranked = used[np.lexsort((used, -scores))]

    new_id = np.zeros(m + 1, dtype=np.uint32)
    detections = []
    for rank, j in enumerate(ranked, start=1):
        new_id[j + 1] = rank
        detections.append(Detection(global_boxes[j], float(sums[j] / counts[j]), int(counts[j]), rank))

    labels = np.zeros(h * w, dtype=np.uint32)
    labels[flat] = new_id[best]
    # ids are 1..K by construction
    return GroupingResult(detections, InstanceLabelMap._unchecked(labels.reshape(h, w)))


def group(
    prob: ProbMap,
    offsets: OffsetMap,
    cfg: GroupingConfig = GroupingConfig(),
    *,
    ignore: ValidityMask | None = None,
    n_threads: int = 1,
) -> GroupingResult:
    """Full two-stage grouping: :func:`select_global_boxes` then :func:`assign_pixels`."""
    _check_shapes(prob, offsets)
    boxes = [b for b, _ in select_global_boxes(prob, offsets, cfg)]
    return assign_pixels(prob, offsets, boxes, cfg, ignore=ignore, n_threads=n_threads)


def resize_outputs(
    prob: ProbMap,
    offsets: OffsetMap,
    long_side: int,
    anchor: AnchorConfig,
) -> tuple[ProbMap, OffsetMap]:
    """Resample network outputs so the larger map dimension equals ``long_side``.

    Probabilities are bilinearly interpolated. Offsets are resampled
    geometrically: the box predicted at the nearest source pixel is scaled into
    the new frame and re-encoded against the anchor of the target pixel, so
    decoded boxes stay consistent under resizing.
    """
    _check_shapes(prob, offsets)
    h, w = prob.shape
    s = long_side / max(h, w)
    nh, nw = max(1, round(h * s)), max(1, round(w * s))
    sy, sx = h / nh, w / nw
    # pixel-centre alignment between the two grids
    ys = (np.arange(nh) + 0.5) * sy - 0.5
    xs = (np.arange(nw) + 0.5) * sx - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    new_prob = ndimage.map_coordinates(prob.data.astype(np.float64), [gy, gx], order=1, mode="nearest")
    new_prob = np.clip(new_prob, 0.0, 1.0)

    src_r = np.clip(np.rint(gy), 0, h - 1).astype(np.int64).ravel()
    src_c = np.clip(np.rint(gx), 0, w - 1).astype(np.int64).ravel()
    boxes = decode_pixel_boxes(offsets, src_r, src_c, anchor)
    boxes[:, 0] = (boxes[:, 0] + 0.5) / sx - 0.5
    boxes[:, 1] = (boxes[:, 1] + 0.5) / sy - 0.5
    boxes[:, 2] /= sx
    boxes[:, 3] /= sy
    tr, tc = np.divmod(np.arange(nh * nw), nw)
    anchors = np.stack(
        [tc.astype(np.float64), tr.astype(np.float64), np.full(tc.size, anchor.width), np.full(tc.size, anchor.height)],
        axis=1,
    )
    new_off = encode_array(boxes, anchors).reshape(nh, nw, 4)
    return ProbMap(new_prob.astype(np.float32)), OffsetMap(new_off.astype(np.float32))
