import numpy as np
import pytest
from scipy import ndimage

from boxembed.geometry import iou
from boxembed.grouping import GroupingConfig, select_global_boxes
from boxembed.synth import NoiseSpec, PlacementError, Scene, generate_scene, oracle_outputs


def test_empty_scene():
    s = generate_scene(32, 32, 0, seed=1)
    assert s.instances == []


def test_same_seed_same_scene():
    assert generate_scene(80, 60, 5, "ellipse", seed=9) == generate_scene(80, 60, 5, "ellipse", seed=9)
    assert generate_scene(80, 60, 5, seed=9) != generate_scene(80, 60, 5, seed=10)


def test_masks_disjoint_and_separated():
    s = generate_scene(256, 256, 5, seed=4)
    masks = [a.mask for a in s.instances]
    assert np.count_nonzero(np.logical_or.reduce(masks)) == sum(int(m.sum()) for m in masks)
    for i, a in enumerate(masks):
        grown = ndimage.binary_dilation(a, np.ones((3, 3), bool))
        for b in masks[i + 1 :]:
            assert not (grown & b).any()


def test_box_iou_limit():
    s = generate_scene(128, 128, 6, seed=2, max_box_iou=0.2)
    boxes = [a.box for a in s.instances]
    assert max(iou(a, b) for i, a in enumerate(boxes) for b in boxes[i + 1 :]) <= 0.2


def test_crowd_flags_and_errors():
    s = generate_scene(64, 64, 4, seed=0, n_crowd=1)
    assert [a.is_crowd for a in s.instances] == [False, False, False, True]
    with pytest.raises(ValueError):
        generate_scene(64, 64, 2, "triangle")
    with pytest.raises(ValueError):
        generate_scene(64, 64, 2, n_crowd=3)
    with pytest.raises(PlacementError):
        generate_scene(16, 16, 30, seed=0, size_range=(8, 8), max_retries=20)


def test_scene_json_round_trip():
    s = generate_scene(50, 70, 4, "ellipse", seed=5, n_crowd=1)
    assert Scene.loads(s.dumps()) == s
    assert Scene.loads(s.dumps()).seed == 5


def test_oracle_zero_noise_is_targets():
    s = generate_scene(64, 64, 3, seed=1)
    prob, off = oracle_outputs(s)
    union = np.logical_or.reduce([a.mask for a in s.instances])
    assert np.array_equal(prob.data == 1, union)
    assert np.array_equal(prob.data == 0, ~union)


def test_noise_common_random_numbers():
    s = generate_scene(64, 64, 3, seed=1)
    _, base = oracle_outputs(s)
    _, a = oracle_outputs(s, NoiseSpec(offset_noise_sd=0.1))
    _, b = oracle_outputs(s, NoiseSpec(offset_noise_sd=0.2))
    # same draws, twice the scale
    assert np.allclose(b.data - base.data, 2 * (a.data - base.data), atol=1e-5)


def test_flip_rate_one_inverts():
    s = generate_scene(32, 32, 2, seed=1)
    p0, _ = oracle_outputs(s)
    p1, _ = oracle_outputs(s, NoiseSpec(flip_rate=1.0))
    assert np.array_equal(p1.data, 1 - p0.data)


def test_small_prob_noise_keeps_boxes():
    s = generate_scene(96, 96, 3, seed=7, max_box_iou=0.0)
    prob, off = oracle_outputs(s, NoiseSpec(prob_noise_sd=0.05))
    boxes = select_global_boxes(prob, off, GroupingConfig())
    assert len(boxes) == 3
    for a in s.instances:
        assert min(np.abs(b.as_array() - a.box.as_array()).max() for b, _ in boxes) <= 1.0


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(prob_noise_sd=-1)
    with pytest.raises(ValueError):
        NoiseSpec(flip_rate=1.5)
