from dataclasses import dataclass, field, replace
from typing import NamedTuple, Tuple

import numpy as np

from sampling.errors import ConfigError

DEFAULT_STRIDES = (8, 16, 32, 64, 128)  # P3-P7


def parse_aspect_ratio(text):
    """'w:h' (or a bare float) -> width/height ratio."""
    text = str(text).strip()
    try:
        if ":" in text:
            w, h = text.split(":", 1)
            ratio = float(w) / float(h)
        else:
            ratio = float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError("aspect_ratios", f"cannot parse aspect ratio '{text}'")
    if not ratio > 0:
        raise ConfigError("aspect_ratios", f"aspect ratio must be positive, got '{text}'")
    return ratio


def format_aspect_ratio(ratio):
    if ratio >= 1:
        return f"{ratio:g}:1"
    return f"1:{1.0 / ratio:g}"


@dataclass(frozen=True)
class LevelSpec:
    stride: float
    scale_multiplier: float = 8.0
    aspect_ratios: Tuple[float, ...] = (1.0,)
    scales_per_octave: int = 1

    @property
    def templates_per_location(self):
        return len(self.aspect_ratios) * self.scales_per_octave

    def validate(self):
        if not self.stride > 0:
            raise ConfigError("strides", f"stride must be positive, got {self.stride}")
        if not self.scale_multiplier > 0:
            raise ConfigError("anchor_scale", f"scale multiplier must be positive, got {self.scale_multiplier}")
        if not self.aspect_ratios:
            raise ConfigError("aspect_ratios", "at least one aspect ratio is required")
        if any(not r > 0 for r in self.aspect_ratios):
            raise ConfigError("aspect_ratios", f"aspect ratios must be positive, got {list(self.aspect_ratios)}")
        if self.scales_per_octave < 1:
            raise ConfigError("scales_per_octave", f"must be >= 1, got {self.scales_per_octave}")

    def template_sizes(self):
        """(w, h) of every anchor template at one location, scale-major then ratio."""
        sizes = []
        for i in range(self.scales_per_octave):
            side = self.scale_multiplier * self.stride * 2.0 ** (i / self.scales_per_octave)
            for ratio in self.aspect_ratios:
                root = np.sqrt(ratio)
                sizes.append((side * root, side / root))
        return sizes


@dataclass(frozen=True)
class PyramidConfig:
    levels: Tuple[LevelSpec, ...] = field(
        default_factory=lambda: tuple(LevelSpec(stride=s) for s in DEFAULT_STRIDES)
    )

    @classmethod
    def default(cls, strides=DEFAULT_STRIDES, scale_multiplier=8.0, aspect_ratios=(1.0,), scales_per_octave=1):
        config = cls(levels=tuple(
            LevelSpec(
                stride=float(s),
                scale_multiplier=float(scale_multiplier),
                aspect_ratios=tuple(float(r) for r in aspect_ratios),
                scales_per_octave=int(scales_per_octave),
            )
            for s in strides
        ))
        config.validate()
        return config

    @property
    def strides(self):
        return tuple(level.stride for level in self.levels)

    @property
    def num_levels(self):
        return len(self.levels)

    def validate(self):
        if not self.levels:
            raise ConfigError("strides", "at least one pyramid level is required")
        for level in self.levels:
            level.validate()
        strides = self.strides
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ConfigError("strides", f"strides must be strictly increasing, got {list(strides)}")

    def with_scale_multiplier(self, multiplier):
        return PyramidConfig(levels=tuple(replace(level, scale_multiplier=float(multiplier)) for level in self.levels))

    def with_aspect_ratios(self, ratios):
        return PyramidConfig(levels=tuple(replace(level, aspect_ratios=tuple(ratios)) for level in self.levels))

    def to_dict(self):
        return {
            "strides": list(self.strides),
            "scale_multiplier": [level.scale_multiplier for level in self.levels],
            "aspect_ratios": [list(level.aspect_ratios) for level in self.levels],
            "scales_per_octave": [level.scales_per_octave for level in self.levels],
        }


class AnchorIndex(NamedTuple):
    level: int
    row: int
    col: int
    template: int


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Anchors of one image, level-major and row-major within a level.

    ``boxes`` is (N, 4), ``centers`` is (N, 2) and ``level_ids`` is (N,).
    ``grid_shapes[i]`` is (rows, cols, templates) of level i and
    ``offsets[i]:offsets[i + 1]`` is its global index range.
    """

    image_width: int
    image_height: int
    strides: Tuple[float, ...]
    grid_shapes: Tuple[Tuple[int, int, int], ...]
    offsets: Tuple[int, ...]
    boxes: np.ndarray
    centers: np.ndarray
    level_ids: np.ndarray

    @property
    def num_anchors(self):
        return int(self.offsets[-1])

    @property
    def num_levels(self):
        return len(self.strides)

    def level_slice(self, level):
        return slice(self.offsets[level], self.offsets[level + 1])

    def level_size(self, level):
        return self.offsets[level + 1] - self.offsets[level]

    def index_of(self, level, row, col, template=0):
        rows, cols, templates = self.grid_shapes[level]
        if not (0 <= row < rows and 0 <= col < cols and 0 <= template < templates):
            raise IndexError(f"({level}, {row}, {col}, {template}) is outside the anchor grid")
        return self.offsets[level] + (row * cols + col) * templates + template

    def locate(self, index):
        if not 0 <= index < self.num_anchors:
            raise IndexError(f"anchor index {index} out of range [0, {self.num_anchors})")
        level = int(np.searchsorted(self.offsets, index, side="right")) - 1
        rows, cols, templates = self.grid_shapes[level]
        local = index - self.offsets[level]
        cell, template = divmod(local, templates)
        row, col = divmod(cell, cols)
        return AnchorIndex(level, row, col, template)
