import functools
import logging
import math

import numpy as np

from models.anchor_models import AnchorSet, PyramidConfig
from sampling.errors import ConfigError

logger = logging.getLogger(__name__)


def _frozen(array):
    array.flags.writeable = False
    return array


@functools.lru_cache(maxsize=256)
def generate_anchors(image_w, image_h, config: PyramidConfig = PyramidConfig()) -> AnchorSet:
    """Tile every pyramid level with unclipped anchors centred at ((col + 0.5)S, (row + 0.5)S).

    Grids are ceil(dim / S) cells per side, so for sides that are not a
    multiple of the stride the last row/column centre may sit up to S/2 past
    the image edge (it stays inside the stride-padded canvas).
    Results are cached per (size, config); the arrays are read-only.
    """
    if image_w < 1 or image_h < 1:
        raise ConfigError("image_size", f"image must be at least 1x1, got {image_w}x{image_h}")
    config.validate()

    boxes, centers, level_ids = [], [], []
    grid_shapes, offsets = [], [0]
    for level_id, level in enumerate(config.levels):
        stride = float(level.stride)
        rows = math.ceil(image_h / stride)
        cols = math.ceil(image_w / stride)
        sizes = np.array(level.template_sizes(), dtype=np.float64)
        templates = sizes.shape[0]

        cx = (np.arange(cols, dtype=np.float64) + 0.5) * stride
        cy = (np.arange(rows, dtype=np.float64) + 0.5) * stride
        grid_y, grid_x = np.meshgrid(cy, cx, indexing="ij")
        # (rows * cols * templates, 2), template index varies fastest
        level_centers = np.repeat(np.stack((grid_x.ravel(), grid_y.ravel()), axis=1), templates, axis=0)
        half = np.tile(sizes / 2.0, (rows * cols, 1))
        level_boxes = np.concatenate((level_centers - half, level_centers + half), axis=1)

        boxes.append(level_boxes)
        centers.append(level_centers)
        level_ids.append(np.full(level_boxes.shape[0], level_id, dtype=np.int64))
        grid_shapes.append((rows, cols, templates))
        offsets.append(offsets[-1] + level_boxes.shape[0])

    anchors = AnchorSet(
        image_width=int(image_w),
        image_height=int(image_h),
        strides=config.strides,
        grid_shapes=tuple(grid_shapes),
        offsets=tuple(offsets),
        boxes=_frozen(np.concatenate(boxes)),
        centers=_frozen(np.concatenate(centers)),
        level_ids=_frozen(np.concatenate(level_ids)),
    )
    logger.debug(f"Generated {anchors.num_anchors} anchors for {image_w}x{image_h} over {config.num_levels} levels")
    return anchors
