"""Box overlap, greedy detection-to-object matching, and error typing.

Matching follows the standard protocol: per category, detections are taken
in decreasing confidence (input order on ties) and each consumes the
not-yet-matched same-image object it overlaps most, provided that overlap
reaches the IoU threshold. Every other detection is false and gets exactly
one of three error types:

* ``LOCALIZATION``: the most-overlapping ground-truth object of any
  category overlaps by more than 0.1 IoU and carries the same label.
* ``CLASS_CONFUSION``: that object overlaps by more than 0.1 but carries a
  different label.
* ``BACKGROUND``: no object overlaps by more than 0.1.

The 0.1 floor is part of the error-type definitions, not a tuning knob.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import (
    BoundingBox,
    DatasetBundle,
    Detection,
    GroundTruthObject,
    group_objects_by_image,
)

ERROR_OVERLAP_FLOOR = 0.1


class ErrorType(enum.Enum):
    LOCALIZATION = "localization"
    CLASS_CONFUSION = "class_confusion"
    BACKGROUND = "background"


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    error_overlap_floor: float = ERROR_OVERLAP_FLOOR

    def __post_init__(self) -> None:
        if not 0 < self.iou_threshold <= 1:
            raise ValueError(f"iou_threshold must be in (0, 1]: {self.iou_threshold}")


@dataclass(frozen=True)
class EvaluatedDetection:
    """A detection after matching: truth status plus overlap diagnostics.

    ``matched_object`` is set iff the detection is true. ``max_overlap`` is
    the IoU with the most-overlapping ground-truth object of any category
    in the image (ties broken by object id), used for error typing.
    """

    detection: Detection
    is_true: bool
    error_type: ErrorType | None
    matched_object: object | None
    max_overlap: float
    max_overlap_object: object | None

    def __post_init__(self) -> None:
        if self.is_true == (self.error_type is not None):
            raise ValueError("error_type must be present exactly when false")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two positive-area boxes, in [0, 1]."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    iw = ix2 - ix
    ih = iy2 - iy
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _most_overlapping(
    box: BoundingBox, objects: Sequence[GroundTruthObject]
) -> tuple[float, GroundTruthObject | None]:
    best = None
    best_iou = 0.0
    for obj in objects:
        v = iou(box, obj.box)
        if v > best_iou or (best is not None and v == best_iou and _id_key(obj.id) < _id_key(best.id)):
            best = obj
            best_iou = v
    if best is None or best_iou == 0.0:
        return 0.0, None
    return best_iou, best


def _id_key(oid) -> tuple:
    # Orderable key for heterogeneous ids; numeric ids sort numerically.
    if isinstance(oid, bool) or not isinstance(oid, (int, float)):
        return (1, str(oid))
    return (0, oid)


def classify_error(
    evaluated: EvaluatedDetection,
    all_objects_in_image: Sequence[GroundTruthObject],
    floor: float = ERROR_OVERLAP_FLOOR,
) -> ErrorType:
    """Assign the error type of a false detection.

    Selects the most-overlapping ground-truth object across all categories
    of the image, then compares labels; below the overlap floor (or with no
    objects at all) the detection is a background confusion.
    """
    best_iou, best = _most_overlapping(evaluated.detection.box, all_objects_in_image)
    if best is None or best_iou <= floor:
        return ErrorType.BACKGROUND
    if best.category == evaluated.detection.category:
        return ErrorType.LOCALIZATION
    return ErrorType.CLASS_CONFUSION


def match_detections(
    detections: Sequence[Detection],
    objects: Sequence[GroundTruthObject],
    cfg: MatchConfig = MatchConfig(),
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]] | None = None,
) -> list[EvaluatedDetection]:
    """Greedy matching for one category; detections and objects must share it.

    ``objects_by_image`` supplies the cross-category object pool used for
    error typing; when omitted, the per-category objects stand in (adequate
    for single-category data).

    Output preserves the input detection order.
    """
    cat_by_image = group_objects_by_image(objects)
    if objects_by_image is None:
        objects_by_image = cat_by_image

    matched_to: dict[int, GroundTruthObject | None] = {}
    by_image: dict[object, list[int]] = {}
    for pos, det in enumerate(detections):
        by_image.setdefault(det.image_id, []).append(pos)
    for image_id, positions in by_image.items():
        free = list(cat_by_image.get(image_id, []))
        order = sorted(
            positions,
            key=lambda p: (-detections[p].confidence, detections[p].index, p),
        )
        for pos in order:
            det = detections[pos]
            best_at = -1
            best_iou = 0.0
            for i, obj in enumerate(free):
                v = iou(det.box, obj.box)
                if v > best_iou or (
                    best_at >= 0 and v == best_iou
                    and _id_key(obj.id) < _id_key(free[best_at].id)
                ):
                    best_at = i
                    best_iou = v
            if best_at >= 0 and best_iou >= cfg.iou_threshold:
                matched_to[pos] = free.pop(best_at)
            else:
                matched_to[pos] = None

    out: list[EvaluatedDetection] = []
    for pos, det in enumerate(detections):
        pool = objects_by_image.get(det.image_id, ())
        max_iou, max_obj = _most_overlapping(det.box, pool)
        match = matched_to[pos]
        if match is not None:
            out.append(
                EvaluatedDetection(det, True, None, match.id, max_iou,
                                   max_obj.id if max_obj else None)
            )
        else:
            partial = EvaluatedDetection(det, False, ErrorType.BACKGROUND, None,
                                         max_iou, max_obj.id if max_obj else None)
            err = classify_error(partial, pool, cfg.error_overlap_floor)
            out.append(
                EvaluatedDetection(det, False, err, None, max_iou,
                                   max_obj.id if max_obj else None)
            )
    return out


def evaluate_bundle(
    bundle: DatasetBundle, cfg: MatchConfig = MatchConfig()
) -> list[EvaluatedDetection]:
    """Match every category of a bundle; result is ordered by detection index."""
    by_image = group_objects_by_image(bundle.objects)
    evaluated: list[EvaluatedDetection] = []
    for category in bundle.categories:
        dets = [d for d in bundle.detections if d.category == category]
        if not dets:
            continue
        objs = [o for o in bundle.objects if o.category == category]
        evaluated.extend(match_detections(dets, objs, cfg, by_image))
    evaluated.sort(key=lambda ev: ev.detection.index)
    return evaluated
