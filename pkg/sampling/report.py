"""Assignment statistics, hyperparameter sweeps and strategy comparisons.

All aggregations are order-free (integer counts, exact ``math.fsum`` sums,
sorted medians), so reports do not depend on image order or worker count.
"""

import csv
from dataclasses import dataclass, field
from itertools import combinations
import json
import logging
import math
import statistics
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.anchor_models import PyramidConfig, format_aspect_ratio
from models.assignment_models import AssignConfig, AtssConfig
from sampling.errors import ConfigError, DataError
from sampling.runner import assign_dataset

logger = logging.getLogger(__name__)

SCALE_EDGES = (0.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, math.inf)
FAIRNESS_OCTAVES = ((32.0, 64.0), (64.0, 128.0), (128.0, 256.0))
ASPECT_EDGES = ((0.0, 0.5, "tall (<1:2)"), (0.5, 2.0, "near-square"), (2.0, math.inf, "wide (>2:1)"))
SWEEP_PARAMETERS = ("k", "anchor_scale_multiplier", "aspect_ratio")
EXPECTED_FRACTION = 0.2  # ATSS: about 0.2 * k * L positives per object
TREND_TOLERANCE = 0.1  # relative dip allowed between neighbouring octaves


def _mean(values):
    return math.fsum(values) / len(values) if len(values) else 0.0


def _pstd(values):
    if not len(values):
        return 0.0
    mean = _mean(values)
    return math.sqrt(math.fsum((v - mean) * (v - mean) for v in values) / len(values))


def _edge_label(lower, upper):
    if math.isinf(upper):
        return f"{lower:g}+"
    return f"{lower:g}-{upper:g}"


@dataclass(frozen=True)
class BucketStats:
    label: str
    lower: float
    upper: float
    gt_count: int
    total_positives: int

    @property
    def mean_positives(self):
        return self.total_positives / self.gt_count if self.gt_count else 0.0

    def to_dict(self):
        return {
            "label": self.label,
            "lower": self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
            "gt_count": self.gt_count,
            "total_positives": self.total_positives,
            "mean_positives": self.mean_positives,
        }


@dataclass(frozen=True)
class AssignmentReport:
    strategy: str
    num_images: int = 0
    num_ground_truths: int = 0
    num_anchors: int = 0
    num_positive_anchors: int = 0
    mean_positives: float = 0.0
    median_positives: float = 0.0
    std_positives: float = 0.0
    zero_positive_count: int = 0
    ignore_fraction: float = 0.0
    scale_buckets: Tuple[BucketStats, ...] = ()
    aspect_buckets: Tuple[BucketStats, ...] = ()
    level_positives: Tuple[int, ...] = ()
    mean_iou_threshold: Optional[float] = None
    mean_iou_mean: Optional[float] = None
    mean_iou_std: Optional[float] = None
    expected_positives: Optional[float] = None
    config: Dict = field(default_factory=dict)
    notes: Tuple[str, ...] = ()

    @property
    def zero_positive_fraction(self):
        return self.zero_positive_count / self.num_ground_truths if self.num_ground_truths else 0.0

    @property
    def level_fractions(self):
        total = sum(self.level_positives)
        return tuple(c / total if total else 0.0 for c in self.level_positives)

    @property
    def fairness_deviation(self):
        """Largest relative gap between a 32-256px octave mean and the global mean."""
        if self.mean_positives <= 0:
            return None
        gaps = [
            abs(b.mean_positives - self.mean_positives) / self.mean_positives
            for b in self.scale_buckets
            if (b.lower, b.upper) in FAIRNESS_OCTAVES and b.gt_count
        ]
        return max(gaps) if gaps else None

    @property
    def scale_trend_non_decreasing(self):
        """Whether the 32-256px octave means grow (or stay flat) with object scale.

        With default anchors and ranges the 64-128 and 128-256 octaves are scaled
        copies of each other, so a neighbour may sit below its predecessor by at
        most TREND_TOLERANCE (relative) and still count as flat.
        """
        means = [
            b.mean_positives for b in self.scale_buckets
            if (b.lower, b.upper) in FAIRNESS_OCTAVES and b.gt_count
        ]
        if len(means) < 2:
            return None
        return all(b >= a * (1.0 - TREND_TOLERANCE) for a, b in zip(means, means[1:]))

    @property
    def positives_per_kl(self):
        """Mean positives per GT divided by k times the number of levels (ATSS-style configs only)."""
        k = self.config.get("k")
        if self.strategy not in ("atss", "center-sampling") or not k or not self.level_positives:
            return None
        return self.mean_positives / (k * len(self.level_positives))

    def summary_row(self):
        row = {
            "strategy": self.strategy,
            "num_images": self.num_images,
            "num_ground_truths": self.num_ground_truths,
            "mean_positives": self.mean_positives,
            "median_positives": self.median_positives,
            "std_positives": self.std_positives,
            "zero_positive_fraction": self.zero_positive_fraction,
            "ignore_fraction": self.ignore_fraction,
            "fairness_deviation": self.fairness_deviation,
            "mean_iou_threshold": self.mean_iou_threshold,
            "positives_per_kl": self.positives_per_kl,
        }
        for level, fraction in enumerate(self.level_fractions):
            row[f"level_{level}_fraction"] = fraction
        return row

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "config": self.config,
            "num_images": self.num_images,
            "num_ground_truths": self.num_ground_truths,
            "num_anchors": self.num_anchors,
            "num_positive_anchors": self.num_positive_anchors,
            "positives_per_gt": {
                "mean": self.mean_positives,
                "median": self.median_positives,
                "std": self.std_positives,
                "expected": self.expected_positives,
                "per_k_level": self.positives_per_kl,
            },
            "zero_positive_count": self.zero_positive_count,
            "zero_positive_fraction": self.zero_positive_fraction,
            "ignore_fraction": self.ignore_fraction,
            "scale_buckets": [b.to_dict() for b in self.scale_buckets],
            "aspect_buckets": [b.to_dict() for b in self.aspect_buckets],
            "level_positives": list(self.level_positives),
            "level_fractions": list(self.level_fractions),
            "iou_statistics": {
                "mean_threshold": self.mean_iou_threshold,
                "mean_mean": self.mean_iou_mean,
                "mean_std": self.mean_iou_std,
            },
            "fairness_deviation": self.fairness_deviation,
            "scale_trend_non_decreasing": self.scale_trend_non_decreasing,
            "notes": list(self.notes),
        }

    def to_text(self):
        lines = [
            f"Strategy: {self.strategy}",
            f"Images: {self.num_images}   GTs: {self.num_ground_truths}   Anchors: {self.num_anchors}",
            f"Positives per GT: mean {_fmt(self.mean_positives)}  median {_fmt(self.median_positives)}  "
            f"std {_fmt(self.std_positives)}  expected {_fmt(self.expected_positives)}",
            f"Zero-positive GTs: {self.zero_positive_count} ({_fmt(self.zero_positive_fraction)})   "
            f"Ignore fraction: {_fmt(self.ignore_fraction)}",
            f"IoU threshold (mean t/m/v): {_fmt(self.mean_iou_threshold)} / {_fmt(self.mean_iou_mean)} / "
            f"{_fmt(self.mean_iou_std)}",
            f"Fairness deviation (32-256px octaves): {_fmt(self.fairness_deviation)}   "
            f"Scale trend non-decreasing (32-256px): {self.scale_trend_non_decreasing}",
            "",
            "By GT scale (sqrt area, px):",
            format_table(
                ["bucket", "gts", "positives", "mean"],
                [[b.label, b.gt_count, b.total_positives, _fmt(b.mean_positives)] for b in self.scale_buckets],
            ),
            "",
            "By GT aspect ratio (w/h):",
            format_table(
                ["bucket", "gts", "positives", "mean"],
                [[b.label, b.gt_count, b.total_positives, _fmt(b.mean_positives)] for b in self.aspect_buckets],
            ),
            "",
            "Positives per pyramid level:",
            format_table(
                ["level", "positives", "fraction"],
                [[f"P{level}", count, _fmt(frac)] for level, (count, frac)
                 in enumerate(zip(self.level_positives, self.level_fractions))],
            ),
        ]
        if self.notes:
            lines += ["", "Notes:"] + [f"  - {note}" for note in self.notes]
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        _write_rows([self.summary_row()], path)


def _write_rows(rows, path, fallback_header=("strategy",)):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()) if rows else list(fallback_header),
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def _fmt(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(headers, rows):
    """Aligned plain-text columns."""
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    out = []
    for n, row in enumerate(cells):
        out.append("  ".join(c.rjust(w) if n and i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def _bucketize(values, counts, edges):
    buckets = []
    for lower, upper, label in edges:
        members = [c for v, c in zip(values, counts) if lower <= v < upper]
        buckets.append(BucketStats(label, lower, upper, len(members), int(sum(members))))
    return tuple(buckets)


def summarize(assignments, strategy=None, config=None, notes=()) -> AssignmentReport:
    """Aggregate per-image assignments of one strategy/config into a report."""
    assignments = list(assignments)
    if strategy is None:
        strategy = assignments[0].strategy if assignments else "none"
    config = dict(config or {})

    counts, scales, aspects = [], [], []
    thresholds, means, stds = [], [], []
    num_levels = max((a.num_levels for a in assignments), default=0)
    level_positives = np.zeros(num_levels, dtype=np.int64)
    num_anchors = num_ignored = num_positive = 0

    for a in assignments:
        num_anchors += a.num_anchors
        num_ignored += a.num_ignored
        num_positive += int(a.positive_indices.size)
        level_positives += np.bincount(a.positive_levels(), minlength=num_levels)[:num_levels]
        for gt, diag in zip(a.ground_truths, a.diagnostics):
            counts.append(diag.num_positives)
            scales.append(gt.scale)
            aspects.append(gt.box.width / gt.box.height)
            if diag.iou_threshold is not None:
                thresholds.append(diag.iou_threshold)
                means.append(diag.iou_mean)
                stds.append(diag.iou_std)

    scale_edges = [(lo, hi, _edge_label(lo, hi)) for lo, hi in zip(SCALE_EDGES, SCALE_EDGES[1:])]
    expected = None
    if strategy == "atss" and "k" in config:
        expected = EXPECTED_FRACTION * config["k"] * num_levels

    report = AssignmentReport(
        strategy=strategy,
        num_images=len(assignments),
        num_ground_truths=len(counts),
        num_anchors=num_anchors,
        num_positive_anchors=num_positive,
        mean_positives=_mean(counts),
        median_positives=float(statistics.median(sorted(counts))) if counts else 0.0,
        std_positives=_pstd(counts),
        zero_positive_count=sum(1 for c in counts if c == 0),
        ignore_fraction=num_ignored / num_anchors if num_anchors else 0.0,
        scale_buckets=_bucketize(scales, counts, scale_edges),
        aspect_buckets=_bucketize(aspects, counts, ASPECT_EDGES),
        level_positives=tuple(int(c) for c in level_positives),
        mean_iou_threshold=_mean(thresholds) if thresholds else None,
        mean_iou_mean=_mean(means) if means else None,
        mean_iou_std=_mean(stds) if stds else None,
        expected_positives=expected,
        config=config,
        notes=tuple(notes),
    )
    logger.info(
        f"Summary [{strategy}]: {report.num_ground_truths} GTs, mean positives {report.mean_positives:.3f}, "
        f"zero-positive fraction {report.zero_positive_fraction:.4f}"
    )
    return report


def report_config(pyramid: PyramidConfig, config: AssignConfig):
    out = config.to_dict()
    out["pyramid"] = pyramid.to_dict()
    return out


# ------------------------------------------------------------------ sweeps


@dataclass(frozen=True)
class SweepTable:
    parameter: str
    values: Tuple[str, ...]
    reports: Tuple[AssignmentReport, ...]
    notes: Tuple[str, ...] = ()

    @property
    def mean_positives(self):
        return [r.mean_positives for r in self.reports]

    @property
    def relative_spread(self):
        """(max - min) / max of the mean positives per GT across rows."""
        values = self.mean_positives
        if not values or max(values) <= 0:
            return 0.0
        return (max(values) - min(values)) / max(values)

    @property
    def normalized_spread(self):
        """(max - min) / max of positives per GT over k * levels; None unless every row has k."""
        values = [r.positives_per_kl for r in self.reports]
        if not values or any(v is None for v in values) or max(values) <= 0:
            return None
        return (max(values) - min(values)) / max(values)

    def rows(self):
        return [{"parameter": self.parameter, "value": v, **r.summary_row()} for v, r in zip(self.values, self.reports)]

    def to_dict(self):
        return {
            "parameter": self.parameter,
            "values": list(self.values),
            "rows": self.rows(),
            "relative_spread": self.relative_spread,
            "normalized_spread": self.normalized_spread,
            "notes": list(self.notes),
        }

    def to_text(self):
        headers = ["value", "mean", "median", "std", "zero_frac", "ignore_frac", "fairness"]
        body = [
            [v, r.mean_positives, r.median_positives, r.std_positives, r.zero_positive_fraction,
             r.ignore_fraction, r.fairness_deviation]
            for v, r in zip(self.values, self.reports)
        ]
        lines = [f"Sweep over {self.parameter}", format_table(headers, body), "",
                 f"Relative spread of mean positives per GT: {_fmt(self.relative_spread)}",
                 f"Relative spread of positives per GT / (k x levels): {_fmt(self.normalized_spread)}"]
        if self.notes:
            lines += ["", "Notes:"] + [f"  - {note}" for note in self.notes]
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        _write_rows(self.rows(), path, ("parameter", "value"))


def _sweep_configs(pyramid, config, parameter, value):
    if parameter == "k":
        if config.strategy not in ("atss", "center-sampling"):
            raise ConfigError("param", f"k is not a parameter of strategy '{config.strategy}'")
        return pyramid, AssignConfig(config.strategy, AtssConfig(k=int(value)), config.iou, config.scale_ranges)
    if parameter == "anchor_scale_multiplier":
        return pyramid.with_scale_multiplier(float(value)), config
    if parameter == "aspect_ratio":
        return pyramid.with_aspect_ratios((float(value),)), config
    raise ConfigError("param", f"unknown sweep parameter '{parameter}', expected one of {', '.join(SWEEP_PARAMETERS)}")


def _value_label(parameter, value):
    if parameter == "aspect_ratio":
        return format_aspect_ratio(float(value))
    if parameter == "k":
        return str(int(value))
    return f"{float(value):g}"


def _k_sweep_notes(values, reports):
    notes = [
        f"Positives per GT grow as about {EXPECTED_FRACTION:g} * k * levels; "
        "k-insensitivity is read from positives per GT / (k x levels), not from the raw mean.",
    ]
    if len(values) > 1:
        pairs = sorted(zip((int(v) for v in values), reports), key=lambda p: p[0])
        (k_lo, lo), (k_hi, hi) = pairs[0], pairs[-1]
        line = (f"Zero-positive GT fraction: {lo.zero_positive_fraction:.4f} at k={k_lo}, "
                f"{hi.zero_positive_fraction:.4f} at k={k_hi}")
        if lo.zero_positive_fraction <= hi.zero_positive_fraction:
            line += "; no small-k instability on this data"
        notes.append(line + ".")
    return tuple(notes)


def run_sweep(images, pyramid: PyramidConfig, config: AssignConfig, parameter, values, workers=1) -> SweepTable:
    """One full assignment + summary per value, same images throughout."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError("param", f"unknown sweep parameter '{parameter}', expected one of {', '.join(SWEEP_PARAMETERS)}")
    values = list(values)
    if not values:
        raise ConfigError("values", "at least one sweep value is required")
    images = list(images)

    reports = []
    for value in values:
        swept_pyramid, swept_config = _sweep_configs(pyramid, config, parameter, value)
        logger.info(f"Sweep {parameter}={_value_label(parameter, value)}")
        assignments = assign_dataset(images, swept_pyramid, swept_config, workers=workers)
        reports.append(summarize(assignments, swept_config.strategy, report_config(swept_pyramid, swept_config)))

    if parameter == "k":
        notes = _k_sweep_notes(values, reports)
    else:
        notes = ("Anchor-setting robustness is measured by positives per GT, a proxy for detector AP stability.",)
    return SweepTable(
        parameter=parameter,
        values=tuple(_value_label(parameter, v) for v in values),
        reports=tuple(reports),
        notes=notes,
    )


# ------------------------------------------------------------- comparisons


def _jaccard(a, b):
    union = np.union1d(a, b).size
    if union == 0:
        return 1.0
    return np.intersect1d(a, b).size / union


@dataclass(frozen=True)
class PairAgreement:
    first: str
    second: str
    mean_jaccard: float
    per_image_jaccard: Tuple[Tuple[int, float], ...]
    level_jaccard: Tuple[float, ...]
    mean_count_delta: float
    mean_abs_count_delta: float
    candidate_agreement: Optional[float] = None
    count_deltas: Tuple[Tuple[int, int, int], ...] = ()

    def to_dict(self):
        return {
            "first": self.first,
            "second": self.second,
            "mean_jaccard": self.mean_jaccard,
            "per_image_jaccard": [[i, j] for i, j in self.per_image_jaccard],
            "level_jaccard": list(self.level_jaccard),
            "mean_count_delta": self.mean_count_delta,
            "mean_abs_count_delta": self.mean_abs_count_delta,
            "candidate_agreement": self.candidate_agreement,
            "count_deltas": [list(d) for d in self.count_deltas],
        }


@dataclass(frozen=True)
class ComparisonRecord:
    strategies: Tuple[str, ...]
    pairs: Tuple[PairAgreement, ...]
    reports: Tuple[AssignmentReport, ...] = ()

    def to_dict(self):
        return {
            "strategies": list(self.strategies),
            "pairs": [p.to_dict() for p in self.pairs],
            "summaries": [r.summary_row() for r in self.reports],
        }

    def rows(self):
        return [
            {
                "first": p.first,
                "second": p.second,
                "mean_jaccard": p.mean_jaccard,
                "mean_count_delta": p.mean_count_delta,
                "mean_abs_count_delta": p.mean_abs_count_delta,
                "candidate_agreement": p.candidate_agreement,
                **{f"level_{i}_jaccard": j for i, j in enumerate(p.level_jaccard)},
            }
            for p in self.pairs
        ]

    def to_text(self):
        pair_table = format_table(
            ["first", "second", "jaccard", "count_delta", "abs_delta", "candidates"],
            [[p.first, p.second, p.mean_jaccard, p.mean_count_delta, p.mean_abs_count_delta, p.candidate_agreement]
             for p in self.pairs],
        )
        summary_table = format_table(
            ["strategy", "mean", "median", "zero_frac", "ignore_frac"],
            [[r.strategy, r.mean_positives, r.median_positives, r.zero_positive_fraction, r.ignore_fraction]
             for r in self.reports],
        )
        return "Positive-set agreement\n" + pair_table + "\n\nPer-strategy summary\n" + summary_table + "\n"

    def write_csv(self, path):
        _write_rows(self.rows(), path, ("first", "second"))


def _compare_pair(name_a, runs_a, name_b, runs_b):
    per_image, deltas = [], []
    num_levels = max((a.num_levels for a in runs_a), default=0)
    level_inter = np.zeros(num_levels, dtype=np.int64)
    level_union = np.zeros(num_levels, dtype=np.int64)
    same_candidates = with_candidates = 0

    for a, b in zip(runs_a, runs_b):
        if a.image_id != b.image_id or a.layout != b.layout or a.num_anchors != b.num_anchors:
            raise DataError(f"Anchor sets differ between '{name_a}' and '{name_b}' on image {a.image_id}")
        per_image.append((a.image_id, _jaccard(a.positive_indices, b.positive_indices)))

        levels_a, levels_b = a.positive_levels(), b.positive_levels()
        for level in range(num_levels):
            pa = a.positive_indices[levels_a == level]
            pb = b.positive_indices[levels_b == level]
            level_inter[level] += np.intersect1d(pa, pb).size
            level_union[level] += np.union1d(pa, pb).size

        for da, db in zip(a.diagnostics, b.diagnostics):
            deltas.append((a.image_id, da.gt_id, db.num_positives - da.num_positives))
            if da.candidates and db.candidates:
                with_candidates += 1
                same_candidates += set(da.candidate_indices) == set(db.candidate_indices)

    return PairAgreement(
        first=name_a,
        second=name_b,
        mean_jaccard=_mean([j for _, j in per_image]) if per_image else 1.0,
        per_image_jaccard=tuple(per_image),
        level_jaccard=tuple(
            float(i / u) if u else 1.0 for i, u in zip(level_inter, level_union)
        ),
        mean_count_delta=_mean([d for _, _, d in deltas]),
        mean_abs_count_delta=_mean([abs(d) for _, _, d in deltas]),
        candidate_agreement=same_candidates / with_candidates if with_candidates else None,
        count_deltas=tuple(deltas),
    )


def compare_results(results_by_strategy: Dict[str, List]) -> ComparisonRecord:
    """Pairwise agreement of precomputed per-image assignments (same images, same anchors)."""
    names = list(results_by_strategy)
    lengths = {len(results_by_strategy[n]) for n in names}
    if len(lengths) > 1:
        raise DataError(f"Strategies were run on different numbers of images: {sorted(lengths)}")
    pairs = tuple(
        _compare_pair(a, results_by_strategy[a], b, results_by_strategy[b])
        for a, b in combinations(names, 2)
    )
    reports = tuple(summarize(results_by_strategy[n], n) for n in names)
    return ComparisonRecord(strategies=tuple(names), pairs=pairs, reports=reports)


def compare_strategies(images, pyramid: PyramidConfig, configs: Dict[str, AssignConfig], workers=1) -> ComparisonRecord:
    images = list(images)
    results = {
        name: assign_dataset(images, pyramid, config, workers=workers)
        for name, config in configs.items()
    }
    return compare_results(results)


def write_json(data, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
