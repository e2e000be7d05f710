"""Bottom-up instance segmentation by bounding-box embedding.

Each person pixel predicts the box of the instance it belongs to, as offsets
from an anchor centred on the pixel. Instances are recovered by picking
global boxes at probability peaks (followed by NMS) and assigning every
person pixel to the global box its own prediction overlaps most.
"""

from .geometry import AnchorConfig, Box, BoxOffsets, anchor_at, decode, encode, iou
from .grouping import (
    Detection,
    GroupingConfig,
    GroupingResult,
    assign_pixels,
    find_peaks,
    group,
    nms,
    select_global_boxes,
)
from .maps import InstanceLabelMap, OffsetMap, ProbMap, ValidityMask, read_tensor, write_tensor
from .rle import RleMask, rle_decode, rle_encode
from .targets import InstanceAnnotation, TrainingTargets, build_targets
from .losses import LossReport, offset_loss, seg_loss, training_loss
from .synth import NoiseSpec, Scene, generate_scene, oracle_outputs
from .evaluation import EvalResult, evaluate, mask_iou

__version__ = "0.1.0"
