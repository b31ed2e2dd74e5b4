"""Shared builders for compact test construction."""

from __future__ import annotations

import pytest

from ctxbound.dataset import (
    BoundingBox,
    DatasetBundle,
    Detection,
    GroundTruthObject,
    ImageInfo,
)
from ctxbound.matching import ErrorType, EvaluatedDetection


def box(x, y, w, h) -> BoundingBox:
    return BoundingBox(x, y, w, h)


def det(image_id=1, category="cat", b=None, conf=0.5, index=0) -> Detection:
    return Detection(image_id, category, b or box(0, 0, 10, 10), conf, index)


def gt(oid=1, image_id=1, category="cat", b=None) -> GroundTruthObject:
    return GroundTruthObject(oid, image_id, category, b or box(0, 0, 10, 10))


def evaluated(
    conf=0.5,
    is_true=True,
    error=None,
    image_id=1,
    category="cat",
    b=None,
    index=0,
) -> EvaluatedDetection:
    if not is_true and error is None:
        error = ErrorType.BACKGROUND
    return EvaluatedDetection(
        det(image_id, category, b, conf, index),
        is_true,
        None if is_true else error,
        1 if is_true else None,
        0.9 if is_true else 0.0,
        1 if is_true else None,
    )


def make_evals(specs) -> list[EvaluatedDetection]:
    """Build evaluated detections from (conf, is_true[, error[, image_id]])."""
    out = []
    for i, spec in enumerate(specs):
        conf, is_true, *rest = spec
        error = rest[0] if rest else None
        image_id = rest[1] if len(rest) > 1 else 1
        out.append(evaluated(conf, is_true, error, image_id, index=i))
    return out


def bundle_of(images, objects, categories, detections) -> DatasetBundle:
    return DatasetBundle(
        tuple(ImageInfo(*img) if isinstance(img, tuple) else img for img in images),
        tuple(objects),
        tuple(categories),
        tuple(detections),
        {name: i + 1 for i, name in enumerate(categories)},
    )


@pytest.fixture
def two_image_bundle() -> DatasetBundle:
    """Image 1 holds a matched cat and a distant beacon; image 2 is empty."""
    objects = [
        gt(1, 1, "cat", box(10, 10, 50, 80)),
        gt(2, 1, "beacon", box(300, 300, 40, 40)),
    ]
    detections = [
        det(1, "cat", box(12, 12, 50, 80), 0.9, 0),
        det(2, "cat", box(200, 10, 30, 30), 0.4, 1),
    ]
    return bundle_of(
        [(1, 640, 480), (2, 640, 480)], objects, ["cat", "beacon"], detections
    )
