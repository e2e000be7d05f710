"""Axis-aligned boxes, IoU and the anchor-relative offset transform.

Boxes live in continuous pixel coordinates where pixel ``(row, col)`` is
centred at ``(x=col, y=row)`` and covers ``[col - 0.5, col + 0.5]``.

Offsets follow the R-CNN parametrisation::

    dx = (gt.cx - anchor.cx) / anchor.w
    dy = (gt.cy - anchor.cy) / anchor.h
    dw = log(gt.w / anchor.w)
    dh = log(gt.h / anchor.h)

Scalar functions take :class:`Box` / :class:`BoxOffsets`; the ``*_array``
variants operate on ``(..., 4)`` float arrays in ``(cx, cy, w, h)`` order and
are what the dense code paths use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Center-form box. ``w`` and ``h`` must be positive."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Box.{name} must be finite, got {getattr(self, name)!r}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"Box width and height must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> Box:
        return cls((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)``."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def scaled(self, s: float) -> Box:
        return Box(self.cx * s, self.cy * s, self.w * s, self.h * s)

    def translated(self, tx: float, ty: float) -> Box:
        return Box(self.cx + tx, self.cy + ty, self.w, self.h)


@dataclass(frozen=True)
class BoxOffsets:
    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dw, self.dh)):
            raise ValueError(f"offsets must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh], dtype=np.float64)


@dataclass(frozen=True)
class AnchorConfig:
    """Prior box shared by every pixel.

    ``scale`` is the square root of the anchor area and ``aspect`` is
    height / width, so the anchor is taller than wide for ``aspect > 1``.
    """

    scale: float = 96.0
    aspect: float = 1.5

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"anchor scale must be positive, got {self.scale}")
        if not (self.aspect > 0 and math.isfinite(self.aspect)):
            raise ValueError(f"anchor aspect must be positive, got {self.aspect}")

    @property
    def width(self) -> float:
        return self.scale / math.sqrt(self.aspect)

    @property
    def height(self) -> float:
        return self.scale * math.sqrt(self.aspect)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes."""
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from corners keep inter <= area exactly; the clamp absorbs rounding
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(1.0, inter / union)


def anchor_at(x: float, y: float, cfg: AnchorConfig) -> Box:
    return Box(float(x), float(y), cfg.width, cfg.height)


def encode(gt: Box, anchor: Box) -> BoxOffsets:
    return BoxOffsets(
        (gt.cx - anchor.cx) / anchor.w,
        (gt.cy - anchor.cy) / anchor.h,
        math.log(gt.w / anchor.w),
        math.log(gt.h / anchor.h),
    )


def decode(off: BoxOffsets, anchor: Box) -> Box:
    """Inverse of :func:`encode`.

    Raises:
        ValueError: if the offsets are not finite or decode to a degenerate box.
    """
    vals = (off.dx, off.dy, off.dw, off.dh)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"cannot decode non-finite offsets {vals}")
    try:
        return Box(
            anchor.cx + off.dx * anchor.w,
            anchor.cy + off.dy * anchor.h,
            anchor.w * math.exp(off.dw),
            anchor.h * math.exp(off.dh),
        )
    except OverflowError:
        raise ValueError(f"offsets {vals} decode to an unbounded box") from None


# ---------------------------------------------------------------------------
# Vectorised forms, (..., 4) arrays in (cx, cy, w, h) order.


def to_corners(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    half = boxes[..., 2:] / 2.0
    return np.concatenate([boxes[..., :2] - half, boxes[..., :2] + half], axis=-1)


def anchor_grid(height: int, width: int, cfg: AnchorConfig) -> np.ndarray:
    """Anchors for every pixel of an ``height x width`` map, shape ``(H, W, 4)``."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.empty((height, width, 4), dtype=np.float64)
    out[..., 0] = xs
    out[..., 1] = ys
    out[..., 2] = cfg.width
    out[..., 3] = cfg.height
    return out


def encode_array(gt: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    out = np.empty(np.broadcast_shapes(gt.shape, anchors.shape), dtype=np.float64)
    out[..., 0] = (gt[..., 0] - anchors[..., 0]) / anchors[..., 2]
    out[..., 1] = (gt[..., 1] - anchors[..., 1]) / anchors[..., 3]
    out[..., 2] = np.log(gt[..., 2] / anchors[..., 2])
    out[..., 3] = np.log(gt[..., 3] / anchors[..., 3])
    return out


def decode_array(offsets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if not np.all(np.isfinite(offsets)):
        raise ValueError("cannot decode non-finite offsets")
    out = np.empty(np.broadcast_shapes(offsets.shape, anchors.shape), dtype=np.float64)
    out[..., 0] = anchors[..., 0] + offsets[..., 0] * anchors[..., 2]
    out[..., 1] = anchors[..., 1] + offsets[..., 1] * anchors[..., 3]
    out[..., 2] = anchors[..., 2] * np.exp(offsets[..., 2])
    out[..., 3] = anchors[..., 3] * np.exp(offsets[..., 3])
    return out


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` center-form boxes."""
    ca = to_corners(np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cb = to_corners(np.asarray(b, dtype=np.float64).reshape(-1, 4))
    iw = np.minimum(ca[:, None, 2], cb[None, :, 2]) - np.maximum(ca[:, None, 0], cb[None, :, 0])
    ih = np.minimum(ca[:, None, 3], cb[None, :, 3]) - np.maximum(ca[:, None, 1], cb[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (ca[:, 2] - ca[:, 0]) * (ca[:, 3] - ca[:, 1])
    area_b = (cb[:, 2] - cb[:, 0]) * (cb[:, 3] - cb[:, 1])
    return np.minimum(inter / (area_a[:, None] + area_b[None, :] - inter), 1.0)
