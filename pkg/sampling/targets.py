"""Regression targets for the two starting states: from an anchor box or from an anchor point."""

from dataclasses import dataclass
import math

import numpy as np

from models.box_models import BBox, Point
from sampling.errors import TargetError


@dataclass(frozen=True)
class BoxDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def as_list(self):
        return [self.dx, self.dy, self.dw, self.dh]


@dataclass(frozen=True)
class DistanceTarget:
    l: float  # noqa: E741
    t: float
    r: float
    b: float

    def as_list(self):
        return [self.l, self.t, self.r, self.b]


def _require_positive(box, what):
    if not (box.width > 0 and box.height > 0):
        raise TargetError(f"{what} must have positive width and height, got {box.as_list()}")


def encode_box_offsets(anchor: BBox, gt: BBox) -> BoxDelta:
    """dx, dy: centre offset over anchor size; dw, dh: log size ratio. Unit weights."""
    _require_positive(anchor, "anchor")
    _require_positive(gt, "ground truth")
    aw, ah = anchor.width, anchor.height
    gw, gh = gt.width, gt.height
    ac, gc = anchor.center, gt.center
    return BoxDelta(
        dx=(gc.x - ac.x) / aw,
        dy=(gc.y - ac.y) / ah,
        dw=math.log(gw / aw),
        dh=math.log(gh / ah),
    )


def decode_box_offsets(anchor: BBox, delta: BoxDelta) -> BBox:
    _require_positive(anchor, "anchor")
    aw, ah = anchor.width, anchor.height
    ac = anchor.center
    cx = ac.x + delta.dx * aw
    cy = ac.y + delta.dy * ah
    w = aw * math.exp(delta.dw)
    h = ah * math.exp(delta.dh)
    return BBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def encode_point_distances(point: Point, gt: BBox) -> DistanceTarget:
    if not gt.contains(point):
        raise TargetError(f"point ({point.x}, {point.y}) lies outside {gt.as_list()}")
    return DistanceTarget(
        l=point.x - gt.x1,
        t=point.y - gt.y1,
        r=gt.x2 - point.x,
        b=gt.y2 - point.y,
    )


def decode_point_distances(point: Point, d: DistanceTarget) -> BBox:
    return BBox(point.x - d.l, point.y - d.t, point.x + d.r, point.y + d.b)


def encode_targets(anchors, gts, result, mode="box"):
    """Regression targets of every positive anchor of an assignment.

    ``mode="box"`` regresses from the anchor box (offsets), ``mode="point"``
    from the anchor centre (distances). Returns (anchor indices, (P, 4) targets).
    """
    if mode not in ("box", "point"):
        raise TargetError(f"unknown regression mode '{mode}', expected 'box' or 'point'")
    indices = result.positive_indices()
    targets = np.zeros((indices.size, 4), dtype=np.float64)
    for row, index in enumerate(indices):
        gt = gts[int(result.labels[index])].box
        if mode == "box":
            anchor = BBox(*(float(v) for v in anchors.boxes[index]))
            targets[row] = encode_box_offsets(anchor, gt).as_list()
        else:
            point = Point(*(float(v) for v in anchors.centers[index]))
            targets[row] = encode_point_distances(point, gt).as_list()
    return indices, targets
