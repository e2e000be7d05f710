"""Per-pixel training targets built from instance annotations.

Every annotated pixel (crowd included) is a positive for the segmentation
target. Pixels of non-crowd instances additionally receive the offsets from
their own anchor to their instance's tight box, and are the only pixels on
which the offset loss is evaluated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .geometry import AnchorConfig, Box, anchor_grid, encode_array
from .maps import OffsetMap, ProbMap, ValidityMask
from .rle import RleMask, rle_decode, rle_encode


class AnnotationError(ValueError):
    pass


def mask_box(mask: np.ndarray) -> Box:
    """Tight box around the foreground pixels of ``mask``."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise AnnotationError("cannot take the bounding box of an empty mask")
    return Box.from_corners(cols[0] - 0.5, rows[0] - 0.5, cols[-1] + 0.5, rows[-1] + 0.5)


@dataclass(frozen=True, eq=False)
class InstanceAnnotation:
    """One ground-truth instance.

    ``box`` is recomputed from ``mask``; passing a box that disagrees with the
    mask bounds raises :class:`AnnotationError`.
    """

    id: int
    mask: np.ndarray
    is_crowd: bool = False
    box: Box | None = field(default=None)

    def __post_init__(self):
        if self.id <= 0:
            raise AnnotationError(f"instance id must be positive, got {self.id}")
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise AnnotationError(f"instance mask must be 2-D, got shape {mask.shape}")
        if not mask.any():
            raise AnnotationError(f"instance {self.id} has an empty mask")
        mask.flags.writeable = False
        tight = mask_box(mask)
        if self.box is not None and self.box != tight:
            raise AnnotationError(f"instance {self.id}: box {self.box} is not the mask bounds {tight}")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "box", tight)
        object.__setattr__(self, "is_crowd", bool(self.is_crowd))

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class TrainingTargets:
    seg: ProbMap
    offsets: OffsetMap
    offset_mask: ValidityMask


def build_targets(
    annotations: Sequence[InstanceAnnotation],
    height: int,
    width: int,
    cfg: AnchorConfig = AnchorConfig(),
) -> TrainingTargets:
    """Segmentation labels, offset targets and the offset-loss mask.

    Raises:
        AnnotationError: a mask does not match the ``(height, width)`` canvas,
            or two non-crowd masks overlap.
    """
    seg = np.zeros((height, width), dtype=bool)
    owned = np.zeros((height, width), dtype=bool)
    offsets = np.zeros((height, width, 4), dtype=np.float64)
    anchors = anchor_grid(height, width, cfg)

    for ann in annotations:
        if ann.mask.shape != (height, width):
            raise AnnotationError(
                f"instance {ann.id}: mask shape {ann.mask.shape} does not fit canvas {(height, width)}"
            )
        seg |= ann.mask
        if ann.is_crowd:
            continue
        if np.any(owned & ann.mask):
            raise AnnotationError(f"instance {ann.id} overlaps another non-crowd instance")
        owned |= ann.mask
        offsets[ann.mask] = encode_array(ann.box.as_array(), anchors[ann.mask])

    return TrainingTargets(
        seg=ProbMap(seg.astype(np.float32)),
        offsets=OffsetMap(offsets.astype(np.float32)),
        offset_mask=ValidityMask(owned),
    )


# ---------------------------------------------------------------------------
# Annotation JSON:
#   {"height": H, "width": W, "instances": [{"id": n, "is_crowd": b, "rle": [...]}]}


def annotations_to_dict(
    annotations: Sequence[InstanceAnnotation], height: int, width: int, **extra: Any
) -> dict:
    doc = {"height": int(height), "width": int(width)}
    doc.update(extra)
    doc["instances"] = [
        {"id": int(a.id), "is_crowd": bool(a.is_crowd), "rle": list(rle_encode(a.mask).counts)}
        for a in annotations
    ]
    return doc


def annotations_from_dict(doc: dict) -> tuple[int, int, list[InstanceAnnotation]]:
    try:
        height, width = int(doc["height"]), int(doc["width"])
        anns = []
        for inst in doc["instances"]:
            mask = rle_decode(RleMask(height, width, inst["rle"]))
            anns.append(InstanceAnnotation(int(inst["id"]), mask, bool(inst.get("is_crowd", False))))
    except (KeyError, TypeError) as exc:
        raise AnnotationError(f"malformed annotation document: {exc!r}") from exc
    except AnnotationError:
        raise
    except ValueError as exc:
        raise AnnotationError(str(exc)) from exc
    ids = [a.id for a in anns]
    if len(set(ids)) != len(ids):
        raise AnnotationError("instance ids must be unique")
    return height, width, anns


def dumps_annotations(annotations, height: int, width: int, **extra: Any) -> str:
    return json.dumps(annotations_to_dict(annotations, height, width, **extra), sort_keys=True)
