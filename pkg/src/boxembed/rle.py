"""Uncompressed COCO-style run-length encoding of binary masks.

Runs are taken over the column-major (Fortran order) flattening of the mask and
alternate background / foreground, always starting with background. A mask
whose first pixel is foreground therefore starts with a zero-length run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RleMask:
    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.height < 0 or self.width < 0:
            raise ValueError("RLE dims must be non-negative")
        if any(c < 0 for c in counts):
            raise ValueError("RLE counts must be non-negative")
        if sum(counts) != self.height * self.width:
            raise ValueError(
                f"RLE counts sum to {sum(counts)}, expected {self.height * self.width}"
            )
        if any(c == 0 for c in counts[1:]):
            raise ValueError("RLE counts may only contain a zero run in the leading position")

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])


def rle_encode(mask: np.ndarray) -> RleMask:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    flat = mask.astype(bool).ravel(order="F")
    if flat.size == 0:
        return RleMask(h, w, ())
    # positions where the value changes, plus both ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(h, w, tuple(runs))


def rle_decode(rle: RleMask) -> np.ndarray:
    total = rle.height * rle.width
    if sum(rle.counts) != total:
        raise ValueError(f"RLE counts sum to {sum(rle.counts)}, expected {total}")
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return flat.reshape((rle.height, rle.width), order="F")
