"""Synthetic scenes and the ideal network outputs they imply.

Scenes are built by dropping rectangles or ellipses onto a canvas one at a
time. A new shape sits on top: it is carved out of every earlier mask together
with a ``gap``-pixel margin, which keeps masks disjoint (and, for ``gap >= 1``,
not 8-adjacent) while their boxes may still overlap as under occlusion.

Randomness comes from :func:`numpy.random.default_rng` (PCG64) seeded with the
scene seed, so a scene is fully determined by its arguments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

from .geometry import AnchorConfig, iou
from .maps import OffsetMap, ProbMap
from .targets import InstanceAnnotation, annotations_from_dict, annotations_to_dict, build_targets

SHAPE_KINDS = ("rectangle", "ellipse")


class PlacementError(RuntimeError):
    """The canvas is too crowded to place another shape under the constraints."""


@dataclass(frozen=True, eq=False)
class Scene:
    height: int
    width: int
    instances: list[InstanceAnnotation]
    seed: int | None = None

    def to_dict(self) -> dict:
        extra = {} if self.seed is None else {"seed": int(self.seed)}
        return annotations_to_dict(self.instances, self.height, self.width, **extra)

    @classmethod
    def from_dict(cls, doc: dict) -> Scene:
        h, w, anns = annotations_from_dict(doc)
        return cls(h, w, anns, doc.get("seed"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> Scene:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            (self.height, self.width, self.seed) == (other.height, other.width, other.seed)
            and len(self.instances) == len(other.instances)
            and all(
                a.id == b.id and a.is_crowd == b.is_crowd and np.array_equal(a.mask, b.mask)
                for a, b in zip(self.instances, other.instances)
            )
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbations applied to the ideal outputs.

    Attributes:
        prob_noise_sd: sd of additive Gaussian noise on probabilities, which
            are then clamped to [0, 1].
        offset_noise_sd: sd of additive Gaussian noise on all four offset
            channels.
        flip_rate: fraction of pixels whose probability ``p`` becomes ``1 - p``.
    """

    prob_noise_sd: float = 0.0
    offset_noise_sd: float = 0.0
    flip_rate: float = 0.0

    def __post_init__(self):
        for name in ("prob_noise_sd", "offset_noise_sd", "flip_rate"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.flip_rate > 1:
            raise ValueError("flip_rate must not exceed 1")


def _draw_shape(kind: str, h: int, w: int, top: int, left: int, shape: tuple[int, int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if kind == "rectangle":
        mask[top : top + h, left : left + w] = True
        return mask
    rr, cc = np.mgrid[0:h, 0:w]
    ry, rx = h / 2.0, w / 2.0
    inside = ((rr + 0.5 - ry) / ry) ** 2 + ((cc + 0.5 - rx) / rx) ** 2 <= 1.0
    mask[top : top + h, left : left + w] = inside
    return mask


def generate_scene(
    height: int,
    width: int,
    n_instances: int,
    shape_kind: str = "rectangle",
    seed: int = 0,
    *,
    size_range: tuple[int, int] | None = None,
    gap: int = 1,
    min_visible: float = 0.5,
    max_box_iou: float | None = None,
    n_crowd: int = 0,
    max_retries: int = 500,
) -> Scene:
    """Place ``n_instances`` shapes on a ``height x width`` canvas.

    Args:
        size_range: inclusive ``(min, max)`` side length in pixels. Defaults to
            roughly 1/12 to 1/4 of the shorter canvas side.
        gap: margin in pixels carved around each new shape from earlier masks.
            ``0`` lets masks touch.
        min_visible: every earlier shape must keep at least this fraction of
            its drawn area after carving.
        max_box_iou: if given, reject placements that make any two instance
            boxes overlap with IoU above this value.
        n_crowd: mark the last ``n_crowd`` placed instances as crowd regions.
        max_retries: placement attempts per shape before giving up.

    Raises:
        PlacementError: a shape could not be placed within ``max_retries``.
    """
    if shape_kind not in SHAPE_KINDS:
        raise ValueError(f"shape_kind must be one of {SHAPE_KINDS}, got {shape_kind!r}")
    if n_instances < 0 or not 0 <= n_crowd <= n_instances:
        raise ValueError("need n_instances >= 0 and 0 <= n_crowd <= n_instances")
    short = min(height, width)
    lo, hi = size_range or (max(3, short // 12), max(4, short // 4))
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid size_range {(lo, hi)}")
    if hi > short:
        raise PlacementError(f"shapes up to {hi} px do not fit a {height}x{width} canvas")

    rng = np.random.default_rng(seed)
    canvas = (height, width)
    structure = np.ones((3, 3), dtype=bool)
    masks: list[np.ndarray] = []
    drawn_area: list[int] = []

    for k in range(n_instances):
        for _ in range(max_retries):
            h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            shape = _draw_shape(shape_kind, h, w, top, left, canvas)
            carve = ndimage.binary_dilation(shape, structure, iterations=gap) if gap > 0 else shape
            trial = [m & ~carve for m in masks] + [shape]
            areas = [int(m.sum()) for m in trial]
            if any(a == 0 or a < min_visible * d for a, d in zip(areas, drawn_area)):
                continue
            if max_box_iou is not None and k > 0:
                boxes = [InstanceAnnotation(1, m).box for m in trial]
                if any(iou(a, b) > max_box_iou for a, b in combinations(boxes, 2)):
                    continue
            masks = trial
            drawn_area.append(areas[-1])
            break
        else:
            raise PlacementError(f"could not place shape {k + 1} of {n_instances} after {max_retries} attempts")

    crowd_from = n_instances - n_crowd
    instances = [InstanceAnnotation(i + 1, m, is_crowd=i >= crowd_from) for i, m in enumerate(masks)]
    return Scene(height, width, instances, seed)


def oracle_outputs(
    scene: Scene,
    noise: NoiseSpec = NoiseSpec(),
    cfg: AnchorConfig = AnchorConfig(),
    seed: int | None = None,
) -> tuple[ProbMap, OffsetMap]:
    """What a perfect network would predict for ``scene``, optionally perturbed.

    Without noise the probability map is the segmentation target (1 on every
    annotated pixel, crowd included) and the offsets are the training targets.
    The same standard-normal draws are scaled by each noise level, so
    increasing a level with a fixed seed perturbs the same pixels further.
    """
    t = build_targets(scene.instances, scene.height, scene.width, cfg)
    rng = np.random.default_rng(scene.seed if seed is None else seed)
    shape = (scene.height, scene.width)
    flip_u = rng.random(shape)
    prob_z = rng.standard_normal(shape)
    off_z = rng.standard_normal(shape + (4,))

    prob = t.seg.data.astype(np.float64)
    offsets = t.offsets.data.astype(np.float64)
    if noise.flip_rate > 0:
        flip = flip_u < noise.flip_rate
        prob[flip] = 1.0 - prob[flip]
    if noise.prob_noise_sd > 0:
        prob = np.clip(prob + noise.prob_noise_sd * prob_z, 0.0, 1.0)
    if noise.offset_noise_sd > 0:
        offsets = offsets + noise.offset_noise_sd * off_z
    return ProbMap(prob.astype(np.float32)), OffsetMap(offsets.astype(np.float32))
