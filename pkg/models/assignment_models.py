from dataclasses import dataclass, field
import math
from typing import Optional, Tuple

import numpy as np

from models.box_models import BBox
from sampling.errors import ConfigError

# Anchor labels: >= 0 is the owning GT index, negative values are reserved
NEGATIVE = -1
IGNORE = -2

STRATEGIES = ("atss", "iou", "fcos", "center-sampling")


@dataclass(frozen=True)
class GroundTruth:
    box: BBox
    category: int
    id: int

    @property
    def scale(self):
        """sqrt(area), the GT size used for octave bucketing"""
        return math.sqrt(self.box.area)


@dataclass(frozen=True)
class AtssConfig:
    k: int = 9

    def validate(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError("k", f"must be an integer >= 1, got {self.k}")


@dataclass(frozen=True)
class IouAssignConfig:
    theta_p: float = 0.5
    theta_n: float = 0.4
    force_best_match: bool = True

    def validate(self):
        if not 0.0 <= self.theta_n <= 1.0:
            raise ConfigError("theta_n", f"must lie in [0, 1], got {self.theta_n}")
        if not 0.0 <= self.theta_p <= 1.0:
            raise ConfigError("theta_p", f"must lie in [0, 1], got {self.theta_p}")
        if self.theta_n > self.theta_p:
            raise ConfigError("theta_n", f"must not exceed theta_p ({self.theta_n} > {self.theta_p})")


@dataclass(frozen=True)
class ScaleRangeConfig:
    """Regression-range bounds m2..m7; level i accepts max(l, t, r, b) in (m_i, m_i+1]."""

    boundaries: Tuple[float, ...] = (0.0, 64.0, 128.0, 256.0, 512.0, math.inf)

    def validate(self, num_levels=None):
        bounds = self.boundaries
        if len(bounds) < 2:
            raise ConfigError("scale_ranges", "at least two boundaries are required")
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ConfigError("scale_ranges", f"boundaries must be strictly increasing, got {list(bounds)}")
        if num_levels is not None and len(bounds) != num_levels + 1:
            raise ConfigError(
                "scale_ranges",
                f"{num_levels} pyramid levels need {num_levels + 1} boundaries, got {len(bounds)}",
            )

    def range_for_level(self, level):
        return self.boundaries[level], self.boundaries[level + 1]

    def to_list(self):
        return ["inf" if math.isinf(b) else b for b in self.boundaries]


@dataclass(frozen=True)
class GtDiagnostics:
    gt_id: int
    # candidates per pyramid level, as global anchor indices
    candidates: Tuple[Tuple[int, ...], ...] = ()
    candidate_ious: Tuple[float, ...] = ()
    iou_mean: Optional[float] = None
    iou_std: Optional[float] = None
    iou_threshold: Optional[float] = None
    num_positives: int = 0
    positives_per_level: Tuple[int, ...] = ()

    @property
    def candidate_indices(self):
        return tuple(i for level in self.candidates for i in level)

    def to_dict(self):
        return {
            "gt_id": self.gt_id,
            "candidates": [list(level) for level in self.candidates],
            "candidate_ious": list(self.candidate_ious),
            "iou_mean": self.iou_mean,
            "iou_std": self.iou_std,
            "iou_threshold": self.iou_threshold,
            "num_positives": self.num_positives,
            "positives_per_level": list(self.positives_per_level),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            gt_id=int(data["gt_id"]),
            candidates=tuple(tuple(int(i) for i in level) for level in data.get("candidates", [])),
            candidate_ious=tuple(float(v) for v in data.get("candidate_ious", [])),
            iou_mean=data.get("iou_mean"),
            iou_std=data.get("iou_std"),
            iou_threshold=data.get("iou_threshold"),
            num_positives=int(data.get("num_positives", 0)),
            positives_per_level=tuple(int(v) for v in data.get("positives_per_level", [])),
        )


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    strategy: str
    labels: np.ndarray
    num_levels: int
    diagnostics: Tuple[GtDiagnostics, ...] = field(default_factory=tuple)

    @property
    def num_anchors(self):
        return int(self.labels.shape[0])

    @property
    def positive_mask(self):
        return self.labels >= 0

    def positive_indices(self, gt_id=None):
        if gt_id is None:
            return np.flatnonzero(self.labels >= 0)
        return np.flatnonzero(self.labels == gt_id)

    def counts(self):
        positives = int(np.count_nonzero(self.labels >= 0))
        negatives = int(np.count_nonzero(self.labels == NEGATIVE))
        ignored = int(np.count_nonzero(self.labels == IGNORE))
        return {"positive": positives, "negative": negatives, "ignore": ignored}

    def label_spans(self):
        """Run-length encoding of the labels as [start, length, label] triples."""
        labels = self.labels
        if labels.size == 0:
            return []
        change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [labels.size]))
        return [[int(s), int(e - s), int(labels[s])] for s, e in zip(starts, ends)]

    def to_record(self):
        return {
            "strategy": self.strategy,
            "num_anchors": self.num_anchors,
            "num_levels": self.num_levels,
            "labels": self.label_spans(),
            "ground_truths": [d.to_dict() for d in self.diagnostics],
        }

    @classmethod
    def from_record(cls, record):
        labels = np.empty(int(record["num_anchors"]), dtype=np.int64)
        covered = 0
        for start, length, label in record["labels"]:
            labels[start:start + length] = label
            covered += length
        if covered != labels.size:
            raise ValueError(f"label spans cover {covered} anchors, expected {labels.size}")
        return cls(
            strategy=record["strategy"],
            labels=labels,
            num_levels=int(record["num_levels"]),
            diagnostics=tuple(GtDiagnostics.from_dict(d) for d in record["ground_truths"]),
        )


@dataclass(frozen=True)
class AssignConfig:
    """Strategy selection plus the settings of every strategy."""

    strategy: str = "atss"
    atss: AtssConfig = AtssConfig()
    iou: IouAssignConfig = IouAssignConfig()
    scale_ranges: ScaleRangeConfig = ScaleRangeConfig()

    def validate(self, num_levels=None):
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"unknown strategy '{self.strategy}', expected one of {', '.join(STRATEGIES)}")
        if self.strategy in ("atss", "center-sampling"):
            self.atss.validate()
        if self.strategy == "iou":
            self.iou.validate()
        if self.strategy in ("fcos", "center-sampling"):
            self.scale_ranges.validate(num_levels)

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "k": self.atss.k,
            "theta_p": self.iou.theta_p,
            "theta_n": self.iou.theta_n,
            "force_best_match": self.iou.force_best_match,
            "scale_ranges": self.scale_ranges.to_list(),
        }
