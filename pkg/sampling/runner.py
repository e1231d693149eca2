from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from typing import Optional, Tuple

import numpy as np

from models.anchor_models import PyramidConfig
from models.assignment_models import IGNORE, AssignConfig, AssignmentResult, GroundTruth, GtDiagnostics
from sampling.assign import assign
from sampling.pyramid import generate_anchors

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ImageAssignment:
    """Compact per-image outcome: positives, counts and per-GT diagnostics.

    The full ``AssignmentResult`` is kept only when requested, since label
    arrays of a whole corpus do not fit comfortably in memory.
    """

    image_id: int
    strategy: str
    ground_truths: Tuple[GroundTruth, ...]
    diagnostics: Tuple[GtDiagnostics, ...]
    positive_indices: np.ndarray
    positive_gt: np.ndarray
    num_anchors: int
    num_ignored: int
    level_offsets: Tuple[int, ...]
    layout: tuple
    result: Optional[AssignmentResult] = None

    @classmethod
    def from_result(cls, image_id, gts, anchors, result, keep_result=False):
        positives = result.positive_indices()
        return cls(
            image_id=image_id,
            strategy=result.strategy,
            ground_truths=tuple(gts),
            diagnostics=result.diagnostics,
            positive_indices=positives,
            positive_gt=result.labels[positives],
            num_anchors=result.num_anchors,
            num_ignored=int(np.count_nonzero(result.labels == IGNORE)),
            level_offsets=anchors.offsets,
            layout=(anchors.image_width, anchors.image_height, anchors.grid_shapes),
            result=result if keep_result else None,
        )

    @property
    def num_levels(self):
        return len(self.level_offsets) - 1

    def positive_levels(self):
        return np.searchsorted(self.level_offsets, self.positive_indices, side="right") - 1


def assign_image(img, pyramid: PyramidConfig, config: AssignConfig, keep_result=False) -> ImageAssignment:
    anchors = generate_anchors(img.resized_width, img.resized_height, pyramid)
    result = assign(anchors, list(img.ground_truths), config)
    return ImageAssignment.from_result(img.image_id, img.ground_truths, anchors, result, keep_result)


def assign_dataset(images, pyramid: PyramidConfig, config: AssignConfig, workers=1, keep_results=False):
    """Assign every image; output order follows input order whatever the worker count."""
    pyramid.validate()
    config.validate(pyramid.num_levels)
    images = list(images)
    logger.info(f"Assigning {len(images)} images with strategy '{config.strategy}' on {workers} worker(s)")
    if workers <= 1:
        return [assign_image(img, pyramid, config, keep_results) for img in images]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda img: assign_image(img, pyramid, config, keep_results), images))
