"""Positive/negative sample definition strategies.

Every strategy returns an ``AssignmentResult`` whose ``labels`` hold one
entry per anchor: the GT index for a positive, ``NEGATIVE`` or ``IGNORE``.
All four are pure functions of (anchors, ground truths, config).
"""

import logging
import math

import numpy as np

from models.assignment_models import (
    IGNORE,
    NEGATIVE,
    AssignConfig,
    AssignmentResult,
    AtssConfig,
    GtDiagnostics,
    IouAssignConfig,
    ScaleRangeConfig,
)
from models.box_models import boxes_to_array
from sampling.geometry import (
    box_areas,
    box_centers,
    ltrb_distances,
    pairwise_iou,
    points_in_boxes,
    squared_center_distances,
)

logger = logging.getLogger(__name__)


def iou_statistics(values):
    """Mean and population standard deviation of candidate IoUs.

    Sums are exact (``math.fsum``), so the result does not depend on the
    order of the candidates.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    mean = math.fsum(values) / n
    deviation = values - mean
    std = math.sqrt(math.fsum(deviation * deviation) / n)
    return mean, std


def _gt_boxes(gts):
    return boxes_to_array([gt.box for gt in gts])


def _empty_result(strategy, anchors):
    labels = np.full(anchors.num_anchors, NEGATIVE, dtype=np.int64)
    return AssignmentResult(strategy=strategy, labels=labels, num_levels=anchors.num_levels)


def select_candidates(anchors, gt_boxes, k):
    """Per level, the min(k, level size) anchors closest to each GT centre.

    Returns one (k_level, G) index array per level; ties in distance go to
    the lower anchor index.
    """
    distances = squared_center_distances(anchors.centers, box_centers(gt_boxes))
    per_level = []
    for level in range(anchors.num_levels):
        sl = anchors.level_slice(level)
        take = min(k, anchors.level_size(level))
        order = np.argsort(distances[sl], axis=0, kind="stable")[:take]
        per_level.append(order + sl.start)
    return per_level


def _resolve_by_iou(num_anchors, claims):
    """claims: iterable of (gt_id, anchor indices, IoUs); highest IoU wins, then lower gt_id."""
    labels = np.full(num_anchors, NEGATIVE, dtype=np.int64)
    best = np.full(num_anchors, -np.inf)
    for gt_id, indices, ious in claims:
        wins = ious > best[indices]
        labels[indices[wins]] = gt_id
        best[indices[wins]] = ious[wins]
    return labels


def _resolve_by_area(num_anchors, claims, areas):
    """claims: iterable of (gt_id, anchor indices); smallest GT area wins, then lower gt_id."""
    labels = np.full(num_anchors, NEGATIVE, dtype=np.int64)
    best = np.full(num_anchors, np.inf)
    for gt_id, indices in claims:
        wins = areas[gt_id] < best[indices]
        labels[indices[wins]] = gt_id
        best[indices[wins]] = areas[gt_id]
    return labels


def _positives_per_level(anchors, labels, gt_id):
    return tuple(int(c) for c in np.bincount(anchors.level_ids[labels == gt_id], minlength=anchors.num_levels))


def _with_counts(anchors, labels, diagnostics):
    out = []
    for diag in diagnostics:
        per_level = _positives_per_level(anchors, labels, diag.gt_id)
        out.append(GtDiagnostics(
            gt_id=diag.gt_id,
            candidates=diag.candidates,
            candidate_ious=diag.candidate_ious,
            iou_mean=diag.iou_mean,
            iou_std=diag.iou_std,
            iou_threshold=diag.iou_threshold,
            num_positives=sum(per_level),
            positives_per_level=per_level,
        ))
    return tuple(out)


def assign_atss(anchors, gts, cfg: AtssConfig = AtssConfig()) -> AssignmentResult:
    """Adaptive training sample selection.

    For every GT: k nearest anchors per level by centre distance form the
    candidates, their IoUs give the threshold t = mean + std, and candidates
    with IoU >= t whose centre lies in the GT become positives. An anchor
    claimed by several GTs goes to the one it overlaps most.
    """
    cfg.validate()
    if not gts:
        return _empty_result("atss", anchors)

    gt_boxes = _gt_boxes(gts)
    per_level = select_candidates(anchors, gt_boxes, cfg.k)

    claims, diagnostics = [], []
    for g in range(len(gts)):
        levels = tuple(tuple(int(i) for i in level[:, g]) for level in per_level)
        candidates = np.concatenate([level[:, g] for level in per_level])
        ious = pairwise_iou(anchors.boxes[candidates], gt_boxes[g:g + 1])[:, 0]
        mean, std = iou_statistics(ious)
        threshold = mean + std
        inside = points_in_boxes(anchors.centers[candidates], gt_boxes[g:g + 1])[:, 0]
        chosen = (ious >= threshold) & inside
        claims.append((g, candidates[chosen], ious[chosen]))
        diagnostics.append(GtDiagnostics(
            gt_id=g,
            candidates=levels,
            candidate_ious=tuple(float(v) for v in ious),
            iou_mean=mean,
            iou_std=std,
            iou_threshold=threshold,
        ))

    labels = _resolve_by_iou(anchors.num_anchors, claims)
    return AssignmentResult(
        strategy="atss",
        labels=labels,
        num_levels=anchors.num_levels,
        diagnostics=_with_counts(anchors, labels, diagnostics),
    )


def assign_iou(anchors, gts, cfg: IouAssignConfig = IouAssignConfig()) -> AssignmentResult:
    """IoU thresholding with an ignore band and optional best-anchor forcing.

    Forcing applies only to GTs that overlap at least one anchor.
    """
    cfg.validate()
    if not gts:
        return _empty_result("iou", anchors)

    gt_boxes = _gt_boxes(gts)
    ious = pairwise_iou(anchors.boxes, gt_boxes)
    max_iou = ious.max(axis=1)
    argmax = ious.argmax(axis=1)

    labels = np.full(anchors.num_anchors, IGNORE, dtype=np.int64)
    labels[max_iou < cfg.theta_n] = NEGATIVE
    positive = max_iou > cfg.theta_p
    labels[positive] = argmax[positive]

    if cfg.force_best_match:
        claim_iou = np.where(positive, max_iou, -np.inf)
        best_anchor = ious.argmax(axis=0)
        for g, a in enumerate(best_anchor):
            value = ious[a, g]
            if value <= 0.0:
                continue
            if value > claim_iou[a] or (value == claim_iou[a] and g < labels[a]):
                labels[a] = g
                claim_iou[a] = value

    diagnostics = [GtDiagnostics(gt_id=g) for g in range(len(gts))]
    return AssignmentResult(
        strategy="iou",
        labels=labels,
        num_levels=anchors.num_levels,
        diagnostics=_with_counts(anchors, labels, diagnostics),
    )


def _in_scale_range(anchors, distances, cfg):
    bounds = np.asarray(cfg.boundaries, dtype=np.float64)
    lower = bounds[anchors.level_ids]
    upper = bounds[anchors.level_ids + 1]
    return (distances > lower[:, None]) & (distances <= upper[:, None])


def assign_spatial_scale(anchors, gts, cfg: ScaleRangeConfig = ScaleRangeConfig()) -> AssignmentResult:
    """Spatial constraint (anchor point inside the GT) then scale constraint.

    A point is positive at level i when max(l, t, r, b) lies in
    (m_i, m_i+1]; points qualifying for several GTs take the smallest one.
    """
    cfg.validate(anchors.num_levels)
    if not gts:
        return _empty_result("fcos", anchors)

    gt_boxes = _gt_boxes(gts)
    inside = points_in_boxes(anchors.centers, gt_boxes)
    max_distance = ltrb_distances(anchors.centers, gt_boxes).max(axis=-1)
    qualifies = inside & _in_scale_range(anchors, max_distance, cfg)

    areas = box_areas(gt_boxes)
    labels = _resolve_by_area(
        anchors.num_anchors,
        ((g, np.flatnonzero(qualifies[:, g])) for g in range(len(gts))),
        areas,
    )
    diagnostics = [GtDiagnostics(gt_id=g) for g in range(len(gts))]
    return AssignmentResult(
        strategy="fcos",
        labels=labels,
        num_levels=anchors.num_levels,
        diagnostics=_with_counts(anchors, labels, diagnostics),
    )


def assign_center_sampling(
    anchors,
    gts,
    atss_cfg: AtssConfig = AtssConfig(),
    scale_cfg: ScaleRangeConfig = ScaleRangeConfig(),
) -> AssignmentResult:
    """Top-k-per-level candidates as in ATSS, final positives by the fixed scale ranges."""
    atss_cfg.validate()
    scale_cfg.validate(anchors.num_levels)
    if not gts:
        return _empty_result("center-sampling", anchors)

    gt_boxes = _gt_boxes(gts)
    per_level = select_candidates(anchors, gt_boxes, atss_cfg.k)
    areas = box_areas(gt_boxes)
    bounds = np.asarray(scale_cfg.boundaries, dtype=np.float64)

    claims, diagnostics = [], []
    for g in range(len(gts)):
        candidates = np.concatenate([level[:, g] for level in per_level])
        points = anchors.centers[candidates]
        inside = points_in_boxes(points, gt_boxes[g:g + 1])[:, 0]
        max_distance = ltrb_distances(points, gt_boxes[g:g + 1])[:, 0].max(axis=-1)
        levels = anchors.level_ids[candidates]
        in_range = (max_distance > bounds[levels]) & (max_distance <= bounds[levels + 1])
        claims.append((g, candidates[inside & in_range]))
        ious = pairwise_iou(anchors.boxes[candidates], gt_boxes[g:g + 1])[:, 0]
        diagnostics.append(GtDiagnostics(
            gt_id=g,
            candidates=tuple(tuple(int(i) for i in level[:, g]) for level in per_level),
            candidate_ious=tuple(float(v) for v in ious),
        ))

    labels = _resolve_by_area(anchors.num_anchors, claims, areas)
    return AssignmentResult(
        strategy="center-sampling",
        labels=labels,
        num_levels=anchors.num_levels,
        diagnostics=_with_counts(anchors, labels, diagnostics),
    )


def assign(anchors, gts, config: AssignConfig = AssignConfig()) -> AssignmentResult:
    config.validate(anchors.num_levels)
    if config.strategy == "atss":
        return assign_atss(anchors, gts, config.atss)
    if config.strategy == "iou":
        return assign_iou(anchors, gts, config.iou)
    if config.strategy == "fcos":
        return assign_spatial_scale(anchors, gts, config.scale_ranges)
    return assign_center_sampling(anchors, gts, config.atss, config.scale_ranges)
