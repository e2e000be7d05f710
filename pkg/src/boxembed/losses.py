"""Segmentation and offset losses with analytic gradients.

Both losses accept plain arrays or the map containers and compute in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .maps import OffsetMap, ProbMap, ValidityMask


@dataclass(frozen=True)
class LossReport:
    seg_loss: float
    offset_loss: float
    seg_grad: np.ndarray
    offset_grad: np.ndarray
    offset_weight: float = 1.0

    @property
    def total(self) -> float:
        return self.seg_loss + self.offset_weight * self.offset_loss


def _data(x) -> np.ndarray:
    if isinstance(x, (ProbMap, OffsetMap, ValidityMask)):
        return x.data
    return np.asarray(x)


def seg_loss(logits, target) -> tuple[float, np.ndarray]:
    """Mean logistic loss over all pixels, on logits.

    ``loss = mean(softplus(z) - y * z)``, gradient ``(sigmoid(z) - y) / N``.
    """
    z = np.asarray(_data(logits), dtype=np.float64)
    y = np.asarray(_data(target), dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} does not match target shape {y.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("segmentation target must be binary (0 or 1)")
    n = max(z.size, 1)
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z) / n)
    return loss, (expit(z) - y) / n


def offset_loss(pred, target, mask) -> tuple[float, np.ndarray]:
    """L1 loss summed over the four channels of masked pixels, divided by the masked pixel count.

    The subgradient uses ``sign(0) = 0``. An empty mask gives zero loss.
    """
    p = np.asarray(_data(pred), dtype=np.float64)
    t = np.asarray(_data(target), dtype=np.float64)
    m = np.asarray(_data(mask), dtype=bool)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} does not match target shape {t.shape}")
    if p.ndim != 3 or p.shape[2] != 4 or m.shape != p.shape[:2]:
        raise ValueError(f"expected (H, W, 4) offsets and (H, W) mask, got {p.shape} and {m.shape}")
    denom = max(1, int(m.sum()))
    diff = (p - t) * m[..., None]
    loss = float(np.abs(diff).sum() / denom)
    return loss, np.sign(diff) / denom


def training_loss(logits, pred_offsets, targets, offset_weight: float = 1.0) -> LossReport:
    """Both losses against a :class:`~boxembed.targets.TrainingTargets`.

    The relative weight of the offset term is a free parameter; 1.0 is only a
    default.
    """
    sl, sg = seg_loss(logits, targets.seg)
    ol, og = offset_loss(pred_offsets, targets.offsets, targets.offset_mask)
    return LossReport(sl, ol, sg, og, offset_weight)
