"""
Training targets and losses
===========================

Training needs a person mask and, for every pixel of a (non-crowd) instance,
the offsets of that instance's tight box relative to the pixel anchor.
"""

import numpy as np

from boxembed import AnchorConfig, build_targets, generate_scene, training_loss
from boxembed.geometry import anchor_grid, decode_array

scene = generate_scene(64, 96, 4, "ellipse", seed=2, n_crowd=1)
t = build_targets(scene.instances, scene.height, scene.width)
print("person pixels", int(t.seg.data.sum()), " regressed pixels", int(t.offset_mask.data.sum()))

# %%
# Crowd pixels count as person for the segmentation head but have no box to
# regress, so the offset mask leaves them out.
crowd = next(a for a in scene.instances if a.is_crowd)
print("crowd pixels in offset mask:", int(t.offset_mask.data[crowd.mask].sum()))

# %%
# Decoding the stored offsets gives back the tight box at every pixel of the
# instance.
decoded = decode_array(t.offsets.data.astype(np.float64), anchor_grid(scene.height, scene.width, AnchorConfig()))
for ann in scene.instances:
    if not ann.is_crowd:
        err = np.abs(decoded[ann.mask] - ann.box.as_array()).max()
        print(f"instance {ann.id}: box {ann.box.as_array().round(1)}  max decode error {err:.1e}")

# %%
# Losses on a random "network" output. The logistic loss averages over all
# pixels; the L1 loss sums the four channels and divides by the number of
# regressed pixels.
rng = np.random.default_rng(0)
rep = training_loss(rng.normal(size=t.seg.shape), rng.normal(scale=0.1, size=t.offsets.data.shape), t)
print(f"seg {rep.seg_loss:.4f}  offsets {rep.offset_loss:.4f}  total {rep.total:.4f}")
