"""Axis-aligned box arithmetic.

Scalar helpers work on ``BBox`` objects, the ``pairwise_*`` helpers on
``(N, 4)`` float64 arrays in ``(x1, y1, x2, y2)`` order. Both evaluate IoU
with the same operation order, so a vectorized IoU equals the scalar one
bit for bit.
"""

import logging

import numpy as np

from models.box_models import BBox, Detection, boxes_to_array

logger = logging.getLogger(__name__)

NMS_IOU_THRESHOLD = 0.6
NMS_SCORE_FLOOR = 0.05
NMS_PRE_TOPK = 1000
NMS_POST_TOPK = 100


def _overlap(a, b):
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    union = a.area + b.area - inter
    return inter, union


def iou(a: BBox, b: BBox) -> float:
    inter, union = _overlap(a, b)
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    inter, union = _overlap(a, b)
    value = inter / union if union > 0.0 else 0.0
    enclosing = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if enclosing <= 0.0:
        return value
    return value - (enclosing - union) / enclosing


def box_areas(boxes):
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def _pairwise_overlap(boxes_a, boxes_b):
    iw = np.maximum(0.0, np.minimum(boxes_a[:, None, 2], boxes_b[None, :, 2])
                    - np.maximum(boxes_a[:, None, 0], boxes_b[None, :, 0]))
    ih = np.maximum(0.0, np.minimum(boxes_a[:, None, 3], boxes_b[None, :, 3])
                    - np.maximum(boxes_a[:, None, 1], boxes_b[None, :, 1]))
    inter = iw * ih
    union = box_areas(boxes_a)[:, None] + box_areas(boxes_b)[None, :] - inter
    return inter, union


def pairwise_iou(boxes_a, boxes_b):
    """(N, 4) x (M, 4) -> (N, M) IoU matrix; zero-union pairs give 0."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    inter, union = _pairwise_overlap(boxes_a, boxes_b)
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def pairwise_giou(boxes_a, boxes_b):
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    inter, union = _pairwise_overlap(boxes_a, boxes_b)
    ious = np.zeros_like(inter)
    np.divide(inter, union, out=ious, where=union > 0.0)
    enclosing = (
        (np.maximum(boxes_a[:, None, 2], boxes_b[None, :, 2]) - np.minimum(boxes_a[:, None, 0], boxes_b[None, :, 0]))
        * (np.maximum(boxes_a[:, None, 3], boxes_b[None, :, 3]) - np.minimum(boxes_a[:, None, 1], boxes_b[None, :, 1]))
    )
    penalty = np.zeros_like(inter)
    np.divide(enclosing - union, enclosing, out=penalty, where=enclosing > 0.0)
    return ious - penalty


def box_centers(boxes):
    return np.stack(((boxes[:, 0] + boxes[:, 2]) / 2.0, (boxes[:, 1] + boxes[:, 3]) / 2.0), axis=1)


def squared_center_distances(points, centers):
    """(N, 2) x (M, 2) -> (N, M) squared L2 distances.

    Squared distances order candidates exactly like L2 distances and avoid
    the rounding of a square root.
    """
    dx = points[:, None, 0] - centers[None, :, 0]
    dy = points[:, None, 1] - centers[None, :, 1]
    return dx * dx + dy * dy


def ltrb_distances(points, boxes):
    """(N, 2) x (M, 4) -> (N, M, 4) signed distances (l, t, r, b) to the box sides."""
    left = points[:, None, 0] - boxes[None, :, 0]
    top = points[:, None, 1] - boxes[None, :, 1]
    right = boxes[None, :, 2] - points[:, None, 0]
    bottom = boxes[None, :, 3] - points[:, None, 1]
    return np.stack((left, top, right, bottom), axis=-1)


def points_in_boxes(points, boxes):
    """Boundary-inclusive (N, M) containment mask."""
    return (
        (points[:, None, 0] >= boxes[None, :, 0])
        & (points[:, None, 0] <= boxes[None, :, 2])
        & (points[:, None, 1] >= boxes[None, :, 1])
        & (points[:, None, 1] <= boxes[None, :, 3])
    )


def _greedy_suppress(boxes, order, iou_threshold):
    keep = []
    remaining = order
    while remaining.size:
        best = remaining[0]
        keep.append(int(best))
        if remaining.size == 1:
            break
        overlaps = pairwise_iou(boxes[best:best + 1], boxes[remaining[1:]])[0]
        remaining = remaining[1:][overlaps <= iou_threshold]
    return keep


def nms(
    dets,
    iou_threshold=NMS_IOU_THRESHOLD,
    score_floor=NMS_SCORE_FLOOR,
    pre_topk=NMS_PRE_TOPK,
    post_topk=NMS_POST_TOPK,
):
    """Per-category greedy NMS.

    Detections scoring at or below ``score_floor`` are dropped, the
    ``pre_topk`` best of every pyramid level survive to suppression and the
    ``post_topk`` best kept boxes are returned sorted by score. Equal scores
    keep input order.
    """
    if not dets:
        return []

    scores = np.array([d.score for d in dets], dtype=np.float64)
    levels = np.array([d.level for d in dets], dtype=np.int64)
    categories = np.array([d.category for d in dets], dtype=np.int64)
    boxes = boxes_to_array([d.box for d in dets])

    candidates = np.flatnonzero(scores > score_floor)
    survivors = []
    for level in np.unique(levels[candidates]):
        at_level = candidates[levels[candidates] == level]
        ranked = at_level[np.argsort(-scores[at_level], kind="stable")]
        survivors.append(ranked[:pre_topk])
    if not survivors:
        return []
    survivors = np.sort(np.concatenate(survivors))

    kept = []
    for category in np.unique(categories[survivors]):
        members = survivors[categories[survivors] == category]
        order = members[np.argsort(-scores[members], kind="stable")]
        kept.extend(_greedy_suppress(boxes, order, iou_threshold))

    kept = np.array(sorted(kept), dtype=np.int64)
    kept = kept[np.argsort(-scores[kept], kind="stable")][:post_topk]
    logger.debug(f"NMS kept {kept.size} of {len(dets)} detections")
    return [dets[i] for i in kept]
