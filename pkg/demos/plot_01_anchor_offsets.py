"""
Anchors and box offsets
=======================

Every pixel carries one fixed anchor box centred on itself. A pixel that
belongs to an instance regresses four numbers that turn its anchor into the
instance's bounding box.
"""

import math

import numpy as np

from boxembed import AnchorConfig, Box, anchor_at, decode, encode, iou

# %%
# The default anchor has an area of 96^2 pixels and is 1.5 times taller than
# it is wide, a reasonable prior for standing people.
cfg = AnchorConfig()
a = anchor_at(100, 50, cfg)
print(a)
print("area", round(a.area, 3), " h/w", round(a.h / a.w, 3))

# %%
# Offsets are the usual R-CNN parametrisation: the centre shift in anchor
# units plus the log ratio of the sizes.
anchor = Box(0, 0, 10, 10)
gt = Box(5, -5, 20, 5)
off = encode(gt, anchor)
print(off.as_array(), "vs", [0.5, -0.5, math.log(2), -math.log(2)])
print("decoded", decode(off, anchor))

# %%
# Round trip on random pairs. The error stays at the level of float64
# rounding.
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(1000):
    g = Box(*rng.uniform(-200, 200, 2), *rng.uniform(1, 300, 2))
    an = Box(*rng.uniform(-200, 200, 2), *rng.uniform(1, 300, 2))
    worst = max(worst, np.abs(decode(encode(g, an), an).as_array() - g.as_array()).max())
print("worst absolute round-trip error", worst)

# %%
# IoU of two 2x2 squares shifted by one pixel diagonally: one unit of overlap
# out of seven.
print(iou(Box.from_corners(0, 0, 2, 2), Box.from_corners(1, 1, 3, 3)), 1 / 7)
