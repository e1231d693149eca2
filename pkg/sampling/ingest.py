"""COCO instance annotations -> DatasetImage records, plus the shorter-side resize policy."""

from collections import defaultdict
from dataclasses import replace
import json
import logging
import os

from models.assignment_models import GroundTruth
from models.box_models import BBox
from models.dataset_models import DatasetImage, LoadedDataset, ResizePolicy
from sampling.errors import DataError

logger = logging.getLogger(__name__)

MIN_BOX_SIDE = 1e-6


def _read_json(path):
    if not os.path.exists(path):
        raise DataError(f"Annotation file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed JSON in {path}: {e}")


def _image_size(img, image_id, source):
    try:
        width, height = int(img["width"]), int(img["height"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Image {image_id} in {source} has no valid width/height: {e}")
    if width < 1 or height < 1:
        raise DataError(f"Image {image_id} in {source} must be at least 1x1, got {width}x{height}")
    return width, height


def parse_coco(data, source="<memory>"):
    """Build a LoadedDataset from an already parsed COCO instance-annotation dict."""
    if not isinstance(data, dict) or "images" not in data or "annotations" not in data:
        raise DataError(f"{source} is not a COCO instance-annotation file (missing images/annotations)")

    try:
        images = {int(img["id"]): img for img in data["images"]}
        categories = {int(c["id"]): str(c.get("name", c["id"])) for c in data.get("categories", [])}
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed image or category entry in {source}: {e}")

    boxes_by_image = defaultdict(list)
    dropped_crowd = dropped_degenerate = 0
    annotations = data["annotations"]
    for ann in annotations:
        try:
            image_id = int(ann["image_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
            category = int(ann["category_id"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed annotation {ann.get('id', '?')} in {source}: {e}")
        if image_id not in images:
            raise DataError(f"Annotation {ann.get('id', '?')} references unknown image id {image_id}")
        if ann.get("iscrowd", 0):
            dropped_crowd += 1
            continue
        if w <= MIN_BOX_SIDE or h <= MIN_BOX_SIDE:
            dropped_degenerate += 1
            continue
        boxes_by_image[image_id].append((BBox.from_xywh(x, y, w, h), category))

    records = []
    for image_id in sorted(images):
        img = images[image_id]
        width, height = _image_size(img, image_id, source)
        gts = tuple(
            GroundTruth(box=box, category=category, id=ordinal)
            for ordinal, (box, category) in enumerate(boxes_by_image[image_id])
        )
        records.append(DatasetImage(
            image_id=image_id,
            width=width,
            height=height,
            ground_truths=gts,
            file_name=str(img.get("file_name", "")),
        ))

    if dropped_crowd or dropped_degenerate:
        logger.warning(f"{source}: dropped {dropped_crowd} crowd and {dropped_degenerate} degenerate annotations")

    dataset = LoadedDataset(
        images=tuple(records),
        categories=categories,
        raw_annotation_count=len(annotations),
        dropped_crowd=dropped_crowd,
        dropped_degenerate=dropped_degenerate,
    )
    logger.info(
        f"Loaded {len(records)} images, {dataset.num_ground_truths} boxes, "
        f"{len(categories)} categories from {source}"
    )
    return dataset


def load_coco(path) -> LoadedDataset:
    return parse_coco(_read_json(path), source=str(path))


def resize_scale(width, height, policy: ResizePolicy):
    if width < 1 or height < 1:
        raise DataError(f"Cannot resize a {width}x{height} image")
    return min(policy.shorter_side / min(width, height), policy.max_longer_side / max(width, height))


def _clip(box, width, height):
    return (
        min(max(box.x1, 0.0), width),
        min(max(box.y1, 0.0), height),
        min(max(box.x2, 0.0), width),
        min(max(box.y2, 0.0), height),
    )


def resize_gt(img: DatasetImage, policy: ResizePolicy = ResizePolicy()) -> DatasetImage:
    """Scale an image record (and its boxes) to the resize policy.

    Boxes are clipped to the resized image; a box with no area left after
    clipping is dropped.
    """
    scale = resize_scale(img.width, img.height, policy)
    new_w = max(1, int(round(img.width * scale)))
    new_h = max(1, int(round(img.height * scale)))

    gts = []
    for gt in img.ground_truths:
        b = gt.box
        x1, y1, x2, y2 = _clip(BBox(b.x1 * scale, b.y1 * scale, b.x2 * scale, b.y2 * scale), new_w, new_h)
        if x2 - x1 <= MIN_BOX_SIDE or y2 - y1 <= MIN_BOX_SIDE:
            logger.warning(f"Image {img.image_id}: box {gt.id} has no area inside the resized image, dropped")
            continue
        gts.append(GroundTruth(box=BBox(x1, y1, x2, y2), category=gt.category, id=len(gts)))

    return replace(
        img,
        ground_truths=tuple(gts),
        resized_width=new_w,
        resized_height=new_h,
        scale=scale,
    )


def resize_dataset(dataset: LoadedDataset, policy: ResizePolicy = ResizePolicy()) -> LoadedDataset:
    policy.validate()
    images = tuple(resize_gt(img, policy) for img in dataset.images)
    lost = dataset.num_ground_truths - sum(len(img.ground_truths) for img in images)
    return replace(dataset, images=images, dropped_by_resize=dataset.dropped_by_resize + lost)
