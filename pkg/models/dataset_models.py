from dataclasses import dataclass, field
from typing import Dict, Tuple

from models.assignment_models import GroundTruth
from sampling.errors import ConfigError


@dataclass(frozen=True)
class ResizePolicy:
    shorter_side: int = 800
    max_longer_side: int = 1333

    def validate(self):
        if not 0 < self.shorter_side <= self.max_longer_side:
            raise ConfigError(
                "resize",
                f"need 0 < shorter side <= longer side, got {self.shorter_side}/{self.max_longer_side}",
            )


@dataclass(frozen=True)
class DatasetImage:
    image_id: int
    width: int
    height: int
    ground_truths: Tuple[GroundTruth, ...] = ()
    resized_width: int = None
    resized_height: int = None
    scale: float = 1.0
    file_name: str = ""

    def __post_init__(self):
        # sizes before any resize
        if self.resized_width is None:
            object.__setattr__(self, "resized_width", self.width)
        if self.resized_height is None:
            object.__setattr__(self, "resized_height", self.height)


@dataclass(frozen=True)
class LoadedDataset:
    images: Tuple[DatasetImage, ...]
    categories: Dict[int, str] = field(default_factory=dict)
    raw_annotation_count: int = 0
    dropped_crowd: int = 0
    dropped_degenerate: int = 0
    dropped_by_resize: int = 0

    @property
    def num_ground_truths(self):
        return sum(len(img.ground_truths) for img in self.images)

    @property
    def dropped_count(self):
        return self.dropped_crowd + self.dropped_degenerate + self.dropped_by_resize
