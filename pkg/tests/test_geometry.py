import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from models.box_models import BBox, Detection, Point, boxes_to_array
from sampling.geometry import (
    NMS_IOU_THRESHOLD,
    NMS_POST_TOPK,
    NMS_PRE_TOPK,
    NMS_SCORE_FLOOR,
    box_centers,
    giou,
    iou,
    ltrb_distances,
    nms,
    pairwise_giou,
    pairwise_iou,
    points_in_boxes,
    squared_center_distances,
)

coord = st.floats(min_value=-500, max_value=500, allow_nan=False, allow_infinity=False, width=64)
extent = st.floats(min_value=0, max_value=300, allow_nan=False, allow_infinity=False, width=64)


@st.composite
def bboxes(draw):
    x, y = draw(coord), draw(coord)
    return BBox(x, y, x + draw(extent), y + draw(extent))


solid_extent = st.floats(min_value=1, max_value=300, allow_nan=False, allow_infinity=False, width=64)
nudge = st.floats(min_value=0.01, max_value=10, allow_nan=False, allow_infinity=False, width=64)


@st.composite
def solid_bboxes(draw):
    x, y = draw(coord), draw(coord)
    return BBox(x, y, x + draw(solid_extent), y + draw(solid_extent))


def test_iou_known_value():
    # intersection 50*50 = 2500, union 10000 + 10000 - 2500 = 17500
    assert iou(BBox(0, 0, 100, 100), BBox(50, 50, 150, 150)) == pytest.approx(1.0 / 7.0, abs=1e-12)


def test_iou_identical_and_disjoint():
    a = BBox(10, 10, 20, 30)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(100, 100, 110, 110)) == 0.0
    # touching edges share no area
    assert iou(a, BBox(20, 10, 30, 30)) == 0.0


def test_iou_zero_area_boxes():
    point = BBox(5, 5, 5, 5)
    assert iou(point, point) == 0.0
    assert iou(point, BBox(0, 0, 10, 10)) == 0.0


def test_giou_disjoint_is_negative():
    a, b = BBox(0, 0, 10, 10), BBox(20, 0, 30, 10)
    # enclosing 30x10 = 300, union 200
    assert giou(a, b) == pytest.approx(-100.0 / 300.0)
    assert giou(a, a) == 1.0


def test_box_constructor_rejects_inverted_corners():
    with pytest.raises(ValueError):
        BBox(10, 0, 5, 5)
    with pytest.raises(ValueError):
        Point(float("nan"), 0.0)


def test_box_contains_is_boundary_inclusive():
    box = BBox(0, 0, 10, 10)
    assert box.contains(Point(0, 0))
    assert box.contains(Point(10, 10))
    assert box.contains(Point(10, 5))
    assert not box.contains(Point(10.000001, 5))


@given(bboxes(), bboxes())
@settings(deadline=None)
def test_iou_symmetric_and_bounded(a, b):
    value = iou(a, b)
    assert 0.0 <= value <= 1.0
    assert value == iou(b, a)
    assert -1.0 <= giou(a, b) <= value + 1e-12


@given(solid_bboxes(), solid_bboxes())
@settings(deadline=None)
def test_giou_stays_above_minus_one_for_boxes_with_area(a, b):
    assert giou(a, b) > -1.0


@given(solid_bboxes(), nudge, st.sampled_from(["grow", "shift"]))
@settings(deadline=None)
def test_iou_is_one_only_for_identical_boxes(a, d, how):
    assert iou(a, a) == 1.0
    assert iou(a, BBox(a.x1, a.y1, a.x2, a.y2)) == 1.0
    if how == "grow":
        other = BBox(a.x1, a.y1, a.x2 + d, a.y2)
    else:
        other = BBox(a.x1 + d, a.y1, a.x2 + d, a.y2)
    assert other != a
    assert iou(a, other) < 1.0
    assert iou(other, a) < 1.0


@given(st.lists(bboxes(), min_size=1, max_size=8), st.lists(bboxes(), min_size=1, max_size=8))
@settings(deadline=None)
def test_pairwise_iou_bit_identical_to_scalar(boxes_a, boxes_b):
    matrix = pairwise_iou(boxes_to_array(boxes_a), boxes_to_array(boxes_b))
    assert matrix.shape == (len(boxes_a), len(boxes_b))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            assert matrix[i, j] == iou(a, b)
            assert matrix[i, j] == oracles.iou(a.as_list(), b.as_list())


@given(st.lists(bboxes(), min_size=1, max_size=6), st.lists(bboxes(), min_size=1, max_size=6))
@settings(deadline=None)
def test_pairwise_giou_matches_scalar(boxes_a, boxes_b):
    matrix = pairwise_giou(boxes_to_array(boxes_a), boxes_to_array(boxes_b))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            assert matrix[i, j] == pytest.approx(giou(a, b), abs=1e-12)


def test_pairwise_helpers_on_small_arrays():
    boxes = np.array([[0, 0, 10, 10], [10, 10, 30, 20]], dtype=np.float64)
    np.testing.assert_array_equal(box_centers(boxes), [[5, 5], [20, 15]])

    points = np.array([[5.0, 5.0], [10.0, 10.0], [31.0, 15.0]])
    np.testing.assert_array_equal(
        points_in_boxes(points, boxes),
        [[True, False], [True, True], [False, False]],
    )
    np.testing.assert_array_equal(squared_center_distances(points[:1], box_centers(boxes)), [[0.0, 325.0]])

    ltrb = ltrb_distances(points[:1], boxes)
    np.testing.assert_array_equal(ltrb[0, 0], [5, 5, 5, 5])
    np.testing.assert_array_equal(ltrb[0, 1], [-5, -5, 25, 15])


def test_pairwise_iou_empty_inputs():
    assert pairwise_iou(np.zeros((0, 4)), np.zeros((3, 4))).shape == (0, 3)


def _det(box, score, category=1, level=0):
    return Detection(BBox(*box), score, category, level)


def test_nms_defaults():
    assert NMS_IOU_THRESHOLD == 0.6
    assert NMS_SCORE_FLOOR == 0.05
    assert NMS_PRE_TOPK == 1000
    assert NMS_POST_TOPK == 100


def test_nms_suppresses_overlapping_same_category():
    dets = [
        _det([0, 0, 100, 100], 0.9),
        _det([5, 5, 105, 105], 0.8),
        _det([200, 200, 300, 300], 0.7),
    ]
    kept = nms(dets)
    assert kept == [dets[0], dets[2]]


def test_nms_keeps_overlaps_of_other_categories():
    dets = [_det([0, 0, 100, 100], 0.9, category=1), _det([0, 0, 100, 100], 0.8, category=2)]
    assert nms(dets) == dets


def test_nms_score_floor_is_exclusive():
    dets = [_det([0, 0, 10, 10], 0.05), _det([20, 20, 30, 30], 0.0500001)]
    assert nms(dets) == [dets[1]]


def test_nms_threshold_suppresses_strictly_above():
    # IoU of these two is exactly 0.6: 60 / 100
    dets = [_det([0, 0, 10, 10], 0.9), _det([0, 0, 10, 6], 0.8)]
    assert iou(dets[0].box, dets[1].box) == pytest.approx(0.6)
    kept = nms(dets, iou_threshold=iou(dets[0].box, dets[1].box))
    assert kept == dets


def test_nms_equal_scores_keep_input_order():
    dets = [_det([0, 0, 10, 10], 0.5), _det([0, 0, 10, 10], 0.5), _det([50, 50, 60, 60], 0.5)]
    assert nms(dets) == [dets[0], dets[2]]


def test_nms_pre_topk_applies_per_level():
    dets = [_det([i * 20, 0, i * 20 + 10, 10], 0.9 - i * 0.01, level=i % 2) for i in range(6)]
    kept = nms(dets, pre_topk=2)
    # two best of level 0 (0, 2) and of level 1 (1, 3)
    assert kept == [dets[0], dets[1], dets[2], dets[3]]


def test_nms_post_topk_and_empty():
    dets = [_det([i * 20, 0, i * 20 + 10, 10], 0.9) for i in range(5)]
    assert nms(dets, post_topk=3) == dets[:3]
    assert nms([]) == []
    assert nms([_det([0, 0, 1, 1], 0.01)]) == []


def test_nms_matches_greedy_reference_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(0, 51))
        raw = []
        for _ in range(n):
            x, y = rng.uniform(0, 100, size=2)
            w, h = rng.uniform(1, 60, size=2)
            # coarse scores so that ties occur
            score = float(rng.integers(0, 21)) / 20.0
            raw.append(([x, y, x + w, y + h], score, int(rng.integers(1, 4)), int(rng.integers(0, 3))))
        dets = [_det(*item) for item in raw]
        threshold = float(rng.choice([0.3, 0.5, 0.6]))
        pre_topk = int(rng.integers(1, 20))
        post_topk = int(rng.integers(1, 30))

        kept = nms(dets, threshold, 0.05, pre_topk, post_topk)
        expected = oracles.greedy_nms(raw, threshold, 0.05, pre_topk, post_topk)
        assert [id(d) for d in kept] == [id(dets[i]) for i in expected]


def test_detection_rejects_bad_score():
    with pytest.raises(ValueError):
        Detection(BBox(0, 0, 1, 1), 1.5, 1)
    assert Detection(BBox(0, 0, 1, 1), 0.5, 3, level=2).to_dict() == {
        "bbox": [0, 0, 1, 1],
        "score": 0.5,
        "category_id": 3,
        "level": 2,
    }


def test_iou_exact_thresholds_use_no_tolerance():
    a = BBox(0, 0, 4, 4)
    b = BBox(0, 0, 4, 2)
    assert iou(a, b) == 0.5
    assert math.isclose(giou(a, b), 0.5)
