from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in absolute pixels, origin top-left, w = x2 - x1 (no +1)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"Invalid box corners: [{self.x1}, {self.y1}, {self.x2}, {self.y2}]")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self):
        return Point((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def contains(self, point):
        """Boundary-inclusive containment test"""
        return self.x1 <= point.x <= self.x2 and self.y1 <= point.y <= self.y2

    def as_list(self):
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_xywh(cls, x, y, w, h):
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    category: int
    # pyramid level that produced the detection, for the per-level top-k
    level: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"Detection score must lie in [0, 1], got {self.score}")

    def to_dict(self):
        return {
            "bbox": self.box.as_list(),
            "score": self.score,
            "category_id": self.category,
            "level": self.level,
        }


def boxes_to_array(boxes):
    """Stack BBoxes into an (N, 4) float64 array."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_list() for b in boxes], dtype=np.float64)
