"""
Grouping pixels into instances
==============================

Inference takes the person probabilities and per-pixel offsets. Peaks of the
probability map propose global boxes, NMS thins them out, and every person
pixel joins the global box its own predicted box overlaps most.
"""

from pathlib import Path

import numpy as np

from boxembed import (
    GroupingConfig,
    InstanceAnnotation,
    Scene,
    evaluate,
    find_peaks,
    generate_scene,
    group,
    oracle_outputs,
    select_global_boxes,
)
from boxembed.evaluation import predictions_from_result
from boxembed.overlay import ppm_bytes, render_overlay

scene = generate_scene(120, 160, 6, "rectangle", seed=4, max_box_iou=0.3)
prob, offsets = oracle_outputs(scene)  # what a perfect network would output
cfg = GroupingConfig()

# %%
# A perfect probability map is flat inside each instance, so each instance
# gives one plateau and one peak: its first pixel in scan order.
peaks = find_peaks(prob, cfg.t_c)
print(len(peaks), "peaks:", [p[0] for p in peaks])

# %%
# Every peak predicts its instance's box exactly, so NMS has nothing to remove.
for box, score in select_global_boxes(prob, offsets, cfg):
    print(np.round(box.as_array(), 2), score)

# %%
# Pixel assignment reproduces the ground-truth masks.
res = group(prob, offsets, cfg)
for ann in scene.instances:
    k = int(np.unique(res.labels.data[ann.mask])[0])
    print(f"instance {ann.id} -> label {k}, exact: {np.array_equal(res.mask(k), ann.mask)}")

# %%
# The label map as a colour overlay.
out = Path("grouping_overlay.ppm")
out.write_bytes(ppm_bytes(render_overlay(res.labels)))
print("wrote", out)

# %%
# The known failure mode: two instances whose boxes coincide cannot be told
# apart by their box embeddings, so they collapse into one detection.
a = np.zeros((40, 40), bool)
b = np.zeros((40, 40), bool)
a[8:14, 8:14] = a[26:32, 26:32] = True
b[8:14, 26:32] = b[26:32, 8:14] = True
twins = Scene(40, 40, [InstanceAnnotation(1, a), InstanceAnnotation(2, b)])
res = group(*oracle_outputs(twins))
print(len(res.detections), "detection(s), AP", evaluate(predictions_from_result(res), twins).ap_mean)
