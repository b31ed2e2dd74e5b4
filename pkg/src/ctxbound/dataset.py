"""Loading, validation, and serialization of annotation and detection files.

The annotation file is a documented subset of the COCO layout: top-level
``images`` ({id, width, height}), ``annotations`` ({id, image_id,
category_id, bbox: [x, y, w, h]}), and ``categories`` ({id, name}).
Detection files are a JSON array of {image_id, category_id,
bbox: [x, y, w, h], score}. Category ids are resolved to names on load;
the original id mapping is retained so bundles round-trip byte-for-byte.

Crowd regions, segmentation masks, and keypoints are not supported.
Annotations flagged ``iscrowd`` are rejected outright rather than guessed at.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence


class DatasetError(Exception):
    """An input file is missing, malformed, or internally inconsistent."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (x, y), positive width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class ImageInfo:
    id: object
    width: float
    height: float


@dataclass(frozen=True)
class GroundTruthObject:
    id: object
    image_id: object
    category: str
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    """A scored box hypothesis. ``index`` is the stable position in file order."""

    image_id: object
    category: str
    box: BoundingBox
    confidence: float
    index: int = 0


@dataclass(frozen=True)
class DatasetBundle:
    """Immutable ground truth plus detections, safe to share across analyses."""

    images: tuple[ImageInfo, ...]
    objects: tuple[GroundTruthObject, ...]
    categories: tuple[str, ...]
    detections: tuple[Detection, ...]
    category_ids: Mapping[str, object] = field(default_factory=dict)

    def empty_categories(self) -> tuple[str, ...]:
        """Categories declared but having zero ground-truth objects.

        These are retained in the bundle; analysis layers skip them
        explicitly instead of silently producing vacuous bounds.
        """
        with_objects = {o.category for o in self.objects}
        return tuple(c for c in self.categories if c not in with_objects)


def _require(record: Mapping, key: str, where: str):
    if key not in record:
        raise DatasetError(f"{where}: missing required field {key!r}")
    return record[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise DatasetError(f"{where}: non-finite value {value!r}")
    return float(value)


def _box_from_list(raw, where: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise DatasetError(f"{where}: bbox must be [x, y, w, h]")
    x, y, w, h = (_number(v, where) for v in raw)
    if w <= 0 or h <= 0:
        raise DatasetError(f"{where}: degenerate box (w={w}, h={h})")
    return BoundingBox(x, y, w, h)


def _load_json(path) -> object:
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{p}: malformed JSON ({exc})") from exc


def load_ground_truth(path):
    """Load an annotation file.

    Returns (images, objects, categories, category_ids) where categories is
    the tuple of names in declaration order and category_ids maps each name
    back to its id in the file.
    """
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise DatasetError(f"{path}: annotation document must be a JSON object")

    names_by_id: dict[object, str] = {}
    categories: list[str] = []
    for i, cat in enumerate(doc.get("categories", [])):
        where = f"category {i}"
        cid = _require(cat, "id", where)
        name = _require(cat, "name", where)
        if cid in names_by_id:
            raise DatasetError(f"{where}: duplicate category id {cid!r}")
        if name in categories:
            raise DatasetError(f"{where}: duplicate category name {name!r}")
        names_by_id[cid] = name
        categories.append(name)

    images: list[ImageInfo] = []
    image_ids: set = set()
    for i, img in enumerate(doc.get("images", [])):
        where = f"image {i}"
        iid = _require(img, "id", where)
        width = _number(_require(img, "width", where), where)
        height = _number(_require(img, "height", where), where)
        if width <= 0 or height <= 0:
            raise DatasetError(f"{where}: non-positive image dimensions")
        if iid in image_ids:
            raise DatasetError(f"{where}: duplicate image id {iid!r}")
        image_ids.add(iid)
        images.append(ImageInfo(iid, width, height))

    objects: list[GroundTruthObject] = []
    seen_ids: set = set()
    for i, ann in enumerate(doc.get("annotations", [])):
        where = f"annotation {i}"
        if ann.get("iscrowd"):
            raise DatasetError(
                f"{where}: crowd annotations are not supported; remove or "
                "decompose them before analysis"
            )
        oid = _require(ann, "id", where)
        iid = _require(ann, "image_id", where)
        cid = _require(ann, "category_id", where)
        if cid not in names_by_id:
            raise DatasetError(f"{where}: unknown category {cid!r}")
        if iid not in image_ids:
            raise DatasetError(f"{where}: undeclared image id {iid!r}")
        if oid in seen_ids:
            raise DatasetError(f"{where}: duplicate object id {oid!r}")
        seen_ids.add(oid)
        box = _box_from_list(_require(ann, "bbox", where), where)
        objects.append(GroundTruthObject(oid, iid, names_by_id[cid], box))

    return tuple(images), tuple(objects), tuple(categories), {
        name: cid for cid, name in names_by_id.items()
    }


def load_detections(path, category_names: Mapping[object, str] | None = None):
    """Load a detection file, preserving file order (no sorting is applied).

    ``category_names`` maps category ids to names, as produced by
    :func:`load_ground_truth`; when omitted, raw category ids are kept.
    Entries already using a known name are accepted as-is.
    """
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise DatasetError(f"{path}: detection document must be a JSON array")

    known_names = set(category_names.values()) if category_names else set()
    out: list[Detection] = []
    for i, det in enumerate(doc):
        where = f"detection {i}"
        if not isinstance(det, dict):
            raise DatasetError(f"{where}: expected an object")
        iid = _require(det, "image_id", where)
        cid = _require(det, "category_id", where)
        score = _require(det, "score", where)
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise DatasetError(f"{where}: score must be a number")
        if not math.isfinite(score):
            raise DatasetError(f"{where}: non-finite confidence {score!r}")
        box = _box_from_list(_require(det, "bbox", where), where)
        if category_names is not None:
            if cid in category_names:
                category = category_names[cid]
            elif cid in known_names:
                category = cid
            else:
                raise DatasetError(f"{where}: unknown category {cid!r}")
        else:
            category = cid
        out.append(Detection(iid, category, box, float(score), index=i))
    return tuple(out)


def load_bundle(gt_path, det_path) -> DatasetBundle:
    """Load and cross-resolve an annotation file and a detection file."""
    images, objects, categories, category_ids = load_ground_truth(gt_path)
    id_to_name = {cid: name for name, cid in category_ids.items()}
    detections = load_detections(det_path, id_to_name)
    image_ids = {img.id for img in images}
    for det in detections:
        if det.image_id not in image_ids:
            raise DatasetError(
                f"detection {det.index}: undeclared image id {det.image_id!r}"
            )
    return DatasetBundle(images, objects, categories, detections, category_ids)


def validate_bundle(bundle: DatasetBundle) -> list[str]:
    """Check bundle invariants; returns a list of issues (empty when consistent).

    Issues are data, not failures: each string names the offending record.
    Categories without ground truth are not invariant violations; see
    :meth:`DatasetBundle.empty_categories`.
    """
    issues: list[str] = []
    image_ids = set()
    for i, img in enumerate(bundle.images):
        if img.id in image_ids:
            issues.append(f"image {i}: duplicate image id {img.id!r}")
        image_ids.add(img.id)
        if img.width <= 0 or img.height <= 0:
            issues.append(f"image {i}: non-positive dimensions")

    categories = set(bundle.categories)
    object_ids = set()
    for i, obj in enumerate(bundle.objects):
        if obj.id in object_ids:
            issues.append(f"object {i}: duplicate object id {obj.id!r}")
        object_ids.add(obj.id)
        if obj.category not in categories:
            issues.append(f"object {i}: unknown category {obj.category!r}")
        if obj.image_id not in image_ids:
            issues.append(f"object {i}: undeclared image id {obj.image_id!r}")

    for i, det in enumerate(bundle.detections):
        if det.category not in categories:
            issues.append(f"detection {i}: unknown category {det.category!r}")
        if det.image_id not in image_ids:
            issues.append(f"detection {i}: undeclared image id {det.image_id!r}")
        if not math.isfinite(det.confidence):
            issues.append(f"detection {i}: non-finite confidence")
    return issues


def group_objects_by_image(
    objects: Sequence[GroundTruthObject],
) -> dict[object, list[GroundTruthObject]]:
    by_image: dict[object, list[GroundTruthObject]] = {}
    for obj in objects:
        by_image.setdefault(obj.image_id, []).append(obj)
    return by_image


def write_ground_truth(bundle: DatasetBundle, path) -> None:
    """Write annotations in the input schema; loading the file reproduces
    the bundle's ground-truth half field-by-field."""
    doc = {
        "images": [
            {"id": img.id, "width": img.width, "height": img.height}
            for img in bundle.images
        ],
        "annotations": [
            {
                "id": obj.id,
                "image_id": obj.image_id,
                "category_id": bundle.category_ids[obj.category],
                "bbox": [obj.box.x, obj.box.y, obj.box.w, obj.box.h],
            }
            for obj in bundle.objects
        ],
        "categories": [
            {"id": bundle.category_ids[name], "name": name}
            for name in bundle.categories
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def write_detections(bundle: DatasetBundle, path) -> None:
    doc = [
        {
            "image_id": det.image_id,
            "category_id": bundle.category_ids[det.category],
            "bbox": [det.box.x, det.box.y, det.box.w, det.box.h],
            "score": det.confidence,
        }
        for det in bundle.detections
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
