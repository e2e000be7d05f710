"""Mask IoU and COCO-style AP / AR for a single image and a single class.

Matching follows the COCO protocol: detections are visited by descending
score and each one takes the still-unmatched ground truth with the highest
mask IoU at or above the threshold. Crowd annotations act as ignore regions;
their overlap is measured as intersection over the detection area, they can
absorb any number of detections, and detections matched to them count as
neither true nor false positives. AP is the mean of the interpolated
precision envelope sampled at 101 recall points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box
from .grouping import Detection, GroupingResult
from .rle import RleMask, rle_decode, rle_encode
from .synth import Scene

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
MAX_DETECTIONS = (1, 10, 100)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)

Prediction = tuple[Detection, RleMask]


@dataclass(frozen=True)
class EvalResult:
    """``ap`` maps IoU threshold to AP; ``ar`` maps a detection cap to AR."""

    ap: dict[float, float]
    ap_mean: float
    ar: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "AP": self.ap_mean,
            "AP50": self.ap.get(0.5),
            "AP75": self.ap.get(0.75),
            "ap": {f"{t:.2f}": v for t, v in self.ap.items()},
            "ar": {str(k): v for k, v in self.ar.items()},
        }


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        raise ValueError("IoU of two empty masks is undefined")
    return np.count_nonzero(a & b) / union


def _sorted_predictions(predictions: Sequence[Prediction]) -> list[Prediction]:
    # the RLE tiebreak makes the order independent of insertion order
    return sorted(predictions, key=lambda p: (-p[0].score, p[1].counts))


def _overlaps(dt_masks: np.ndarray, gt_masks: np.ndarray, crowd: np.ndarray) -> np.ndarray:
    """``(D, G)`` overlap table; crowd columns use intersection over detection area."""
    d = dt_masks.reshape(len(dt_masks), -1).astype(np.float64)
    g = gt_masks.reshape(len(gt_masks), -1).astype(np.float64)
    inter = d @ g.T
    d_area = d.sum(axis=1)[:, None]
    g_area = g.sum(axis=1)[None, :]
    union = np.where(crowd[None, :], d_area, d_area + g_area - inter)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = inter / union
    return np.nan_to_num(out, nan=0.0)


@dataclass
class _Matching:
    matched: np.ndarray  # (T, D) bool, detection matched to a non-crowd GT
    ignored: np.ndarray  # (T, D) bool, detection matched to a crowd region
    n_gt: int


def _match(predictions: Sequence[Prediction], scene: Scene, thresholds: Sequence[float]) -> _Matching:
    dts = _sorted_predictions(predictions)
    for det, rle in dts:
        if (rle.height, rle.width) != (scene.height, scene.width):
            raise ValueError(
                f"prediction mask {rle.height}x{rle.width} does not match scene {scene.height}x{scene.width}"
            )
    gts = sorted(scene.instances, key=lambda a: a.is_crowd)  # non-crowd first
    crowd = np.array([a.is_crowd for a in gts], dtype=bool)
    n_gt = int((~crowd).sum())
    D, G, T = len(dts), len(gts), len(thresholds)
    matched = np.zeros((T, D), dtype=bool)
    ignored = np.zeros((T, D), dtype=bool)
    if D == 0 or G == 0:
        return _Matching(matched, ignored, n_gt)

    dt_masks = np.stack([rle_decode(r) for _, r in dts])
    gt_masks = np.stack([a.mask for a in gts])
    ious = _overlaps(dt_masks, gt_masks, crowd)

    for ti, t in enumerate(thresholds):
        taken = np.zeros(G, dtype=bool)
        for di in range(D):
            best, m = min(t, 1 - 1e-10), -1
            for gi in range(G):
                if taken[gi] and not crowd[gi]:
                    continue
                # a non-crowd match is final; crowd columns come last
                if m > -1 and not crowd[m] and crowd[gi]:
                    break
                if ious[di, gi] < best:
                    continue
                best, m = ious[di, gi], gi
            if m == -1:
                continue
            taken[m] = True
            if crowd[m]:
                ignored[ti, di] = True
            else:
                matched[ti, di] = True
    return _Matching(matched, ignored, n_gt)


def _ap_from_flags(tp: np.ndarray, fp: np.ndarray, n_gt: int) -> tuple[float, float]:
    """AP (101-point interpolated) and final recall from ordered TP/FP flags."""
    if tp.size == 0:
        return 0.0, 0.0
    tps = np.cumsum(tp, dtype=np.float64)
    fps = np.cumsum(fp, dtype=np.float64)
    recall = tps / n_gt
    precision = tps / np.maximum(tps + fps, np.finfo(np.float64).eps)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.zeros_like(RECALL_POINTS)
    ok = idx < recall.size
    q[ok] = envelope[idx[ok]]
    return float(q.mean()), float(recall[-1])


def evaluate(
    predictions: Sequence[Prediction],
    ground_truth: Scene,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    max_detections: Sequence[int] = MAX_DETECTIONS,
) -> EvalResult:
    """COCO-style mask AP per threshold and AR per detection cap.

    AP uses the largest cap in ``max_detections``. AR for a cap is the recall
    averaged over ``iou_thresholds`` with only the top-scoring detections up to
    that cap.

    Raises:
        ValueError: mismatched canvas sizes, or a scene without non-crowd
            instances (AP is undefined there).
    """
    thresholds = [float(t) for t in iou_thresholds]
    caps = sorted(int(c) for c in max_detections)
    m = _match(predictions, ground_truth, thresholds)
    if m.n_gt == 0:
        raise ValueError("ground truth has no non-crowd instances; AP is undefined")

    def at_cap(ti: int, cap: int) -> tuple[float, float]:
        keep = ~m.ignored[ti, :cap]
        tp = m.matched[ti, :cap][keep]
        return _ap_from_flags(tp, ~tp, m.n_gt)

    ap = {t: at_cap(ti, caps[-1])[0] for ti, t in enumerate(thresholds)}
    ar = {cap: float(np.mean([at_cap(ti, cap)[1] for ti in range(len(thresholds))])) for cap in caps}
    return EvalResult(ap, float(np.mean(list(ap.values()))), ar)


def pr_curve(
    predictions: Sequence[Prediction], ground_truth: Scene, iou_threshold: float
) -> tuple[np.ndarray, np.ndarray]:
    """Raw (uninterpolated) recall and precision after each non-ignored detection."""
    m = _match(predictions, ground_truth, [iou_threshold])
    if m.n_gt == 0:
        raise ValueError("ground truth has no non-crowd instances")
    tp = m.matched[0][~m.ignored[0]]
    tps = np.cumsum(tp, dtype=np.float64)
    return tps / m.n_gt, tps / np.arange(1, tp.size + 1)


# ---------------------------------------------------------------------------
# Prediction interchange:
#   [{"score": s, "box": [cx, cy, w, h], "rle": [counts...]}, ...]


def predictions_from_result(result: GroupingResult) -> list[Prediction]:
    return [(d, rle_encode(result.mask(d.instance_id))) for d in result.detections]


def predictions_to_json(predictions: Sequence[Prediction]) -> list[dict]:
    return [
        {
            "instance_id": d.instance_id,
            "score": d.score,
            "box": [d.box.cx, d.box.cy, d.box.w, d.box.h],
            "pixel_count": d.pixel_count,
            "rle": list(r.counts),
        }
        for d, r in predictions
    ]


def predictions_from_json(doc: list, height: int, width: int) -> list[Prediction]:
    out = []
    for i, item in enumerate(doc):
        rle = RleMask(height, width, item["rle"])
        det = Detection(
            box=Box(*(float(v) for v in item["box"])),
            score=float(item["score"]),
            pixel_count=int(item.get("pixel_count", rle.area)),
            instance_id=int(item.get("instance_id", i + 1)),
        )
        out.append((det, rle))
    return out
