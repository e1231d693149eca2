"""Seeded synthetic corpus written in the COCO instance-annotation format."""

from dataclasses import dataclass
import json
import logging
import math

import numpy as np

from sampling.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    images: int = 1000
    boxes_per_image: int = 5
    min_size: float = 16.0
    max_size: float = 512.0
    num_categories: int = 80

    def validate(self):
        if self.images < 0:
            raise ConfigError("synthetic.images", f"must be >= 0, got {self.images}")
        if self.boxes_per_image < 0:
            raise ConfigError("synthetic.boxes", f"must be >= 0, got {self.boxes_per_image}")
        if not 0 < self.min_size <= self.max_size:
            raise ConfigError("synthetic.min_size", f"need 0 < min_size <= max_size, got {self.min_size}/{self.max_size}")
        if self.max_size > 800:
            raise ConfigError("synthetic.max_size", f"boxes must fit an 800px side, got {self.max_size}")
        if self.num_categories < 1:
            raise ConfigError("synthetic.categories", f"must be >= 1, got {self.num_categories}")

    @classmethod
    def parse(cls, text, default_seed=0):
        """'seed=1,images=1000,boxes=5,min_size=16,max_size=512' -> SyntheticSpec"""
        keys = {
            "seed": ("seed", int),
            "images": ("images", int),
            "boxes": ("boxes_per_image", int),
            "min_size": ("min_size", float),
            "max_size": ("max_size", float),
            "categories": ("num_categories", int),
        }
        values = {"seed": default_seed}
        for item in filter(None, (part.strip() for part in str(text).split(","))):
            key, sep, raw = item.partition("=")
            if not sep or key.strip() not in keys:
                raise ConfigError("synthetic", f"unknown or malformed item '{item}'")
            name, cast = keys[key.strip()]
            try:
                values[name] = cast(raw.strip())
            except ValueError:
                raise ConfigError(f"synthetic.{key.strip()}", f"cannot parse '{raw.strip()}'")
        spec = cls(**values)
        spec.validate()
        return spec

    def to_dict(self):
        return {
            "seed": self.seed,
            "images": self.images,
            "boxes": self.boxes_per_image,
            "min_size": self.min_size,
            "max_size": self.max_size,
            "categories": self.num_categories,
        }


def generate_corpus(spec: SyntheticSpec = SyntheticSpec()):
    """COCO dict with images already at the 800/1333 policy.

    Shorter side 800, longer side uniform in [800, 1333], orientation random.
    Box sqrt-area is log-uniform in [min_size, max_size] and aspect (w/h)
    log-uniform in [1/2, 2]; boxes lie fully inside their image.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    images, annotations = [], []
    ann_id = 1
    for image_id in range(1, spec.images + 1):
        longer = int(rng.integers(800, 1334))
        if rng.random() < 0.5:
            width, height = longer, 800
        else:
            width, height = 800, longer
        images.append({"id": image_id, "width": width, "height": height, "file_name": f"synthetic_{image_id:06d}.jpg"})

        for _ in range(spec.boxes_per_image):
            size = math.exp(rng.uniform(math.log(spec.min_size), math.log(spec.max_size)))
            aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
            w = min(size * math.sqrt(aspect), float(width))
            h = min(size / math.sqrt(aspect), float(height))
            x = rng.uniform(0.0, width - w)
            y = rng.uniform(0.0, height - h)
            annotations.append({
                "id": ann_id,
                "image_id": image_id,
                "bbox": [x, y, w, h],
                "area": w * h,
                "category_id": int(rng.integers(1, spec.num_categories + 1)),
                "iscrowd": 0,
            })
            ann_id += 1

    categories = [{"id": i, "name": f"synthetic-{i}"} for i in range(1, spec.num_categories + 1)]
    logger.info(f"Generated synthetic corpus: {len(images)} images, {len(annotations)} boxes (seed {spec.seed})")
    return {"images": images, "annotations": annotations, "categories": categories}


def write_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(corpus, f, sort_keys=True)
    logger.info(f"Synthetic corpus written to {path}")
