"""Contextual relations evaluated against ground truth.

A relation is a binary predicate over one detection and the ground-truth
objects of its image. Built-in families:

* ``Constant(v)``: fixed value; ``Constant(0)`` is the no-context baseline.
* ``Random(seed)``: seeded hash of the detection index, the noise baseline.
* ``CoOccurrence(c)``: some object of category ``c`` exists in the image
  whose IoU with the detection is at most 0.1 (the detection's own object,
  or anything it sits on, never counts as its context).
* ``Spatial(c, (v, h))``: some such object has its box center in cell
  ``(v, h)`` of a square grid centered on the detection. Cell sides equal
  ``height_factor`` times the detection height, so the frame is invariant
  to image location and object scale. The first index grows downward, the
  second rightward, and (0, 0) contains the detection center.
* ``And`` / ``Or``: pairwise combinations of the above (composites of
  composites are rejected).

Relation values depend only on ground truth, never on detector output, so
downstream bounds are genuine upper bounds for any realizable context
extractor.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import BoundingBox, DatasetBundle, GroundTruthObject, group_objects_by_image
from .matching import ERROR_OVERLAP_FLOOR, EvaluatedDetection, iou

# Objects overlapping a detection by more than this IoU are excluded from its
# context, matching the floor used by the error-type definitions.
SELF_EXCLUSION_IOU = ERROR_OVERLAP_FLOOR


@dataclass(frozen=True)
class SpatialFrameConfig:
    """Geometry of the detection-centered grid used by spatial relations."""

    height_factor: float = 1.0
    grid_extent: int = 3

    def __post_init__(self) -> None:
        if self.height_factor <= 0:
            raise ValueError("height_factor must be positive")
        if self.grid_extent < 1:
            raise ValueError("grid_extent must be at least 1")


class Relation:
    """Base class for contextual relations; use the concrete variants."""

    def __str__(self) -> str:
        return relation_string(self)


@dataclass(frozen=True)
class Constant(Relation):
    value: int

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise ValueError("constant context must be 0 or 1")


@dataclass(frozen=True)
class Random(Relation):
    seed: int


@dataclass(frozen=True)
class CoOccurrence(Relation):
    category: str


@dataclass(frozen=True)
class Spatial(Relation):
    category: str
    cell: tuple[int, int]


def _check_sides(left: Relation, right: Relation) -> None:
    for side in (left, right):
        if isinstance(side, (And, Or)):
            raise ValueError("composites combine exactly two non-composite relations")


@dataclass(frozen=True)
class And(Relation):
    left: Relation
    right: Relation

    def __post_init__(self) -> None:
        _check_sides(self.left, self.right)


@dataclass(frozen=True)
class Or(Relation):
    left: Relation
    right: Relation

    def __post_init__(self) -> None:
        _check_sides(self.left, self.right)


def relation_string(rel: Relation) -> str:
    """Canonical serialization, e.g. ``spatial(zebra,[0,-1])``; used in
    reports and as the deterministic tie-breaker wherever bounds tie."""
    if isinstance(rel, Constant):
        return f"const({rel.value})"
    if isinstance(rel, Random):
        return f"random({rel.seed})"
    if isinstance(rel, CoOccurrence):
        return f"cooccur({rel.category})"
    if isinstance(rel, Spatial):
        return f"spatial({rel.category},[{rel.cell[0]},{rel.cell[1]}])"
    if isinstance(rel, And):
        return f"and({relation_string(rel.left)},{relation_string(rel.right)})"
    if isinstance(rel, Or):
        return f"or({relation_string(rel.left)},{relation_string(rel.right)})"
    raise TypeError(f"unknown relation type: {type(rel).__name__}")


def spatial_cell(
    det_box: BoundingBox, point: tuple[float, float], cfg: SpatialFrameConfig
) -> tuple[int, int]:
    """Grid cell of ``point`` in the frame centered on ``det_box``.

    Cells are squares with side ``height_factor * det_box.h``; the central
    cell (0, 0) is the square around the detection center. Returns
    (vertical, horizontal) with down and right positive.
    """
    cx, cy = det_box.center
    size = cfg.height_factor * det_box.h
    v = math.floor((point[1] - cy) / size + 0.5)
    h = math.floor((point[0] - cx) / size + 0.5)
    return (v, h)


def _hash_bit(seed: int, index: int) -> int:
    digest = hashlib.blake2b(
        f"{seed}:{index}".encode("ascii"), digest_size=8
    ).digest()
    return digest[0] & 1


def _context_objects(
    det: EvaluatedDetection, image_objects: Sequence[GroundTruthObject]
):
    box = det.detection.box
    for obj in image_objects:
        if iou(box, obj.box) <= SELF_EXCLUSION_IOU:
            yield obj


def eval_relation(
    rel: Relation,
    det: EvaluatedDetection,
    image_objects: Sequence[GroundTruthObject],
    cfg: SpatialFrameConfig = SpatialFrameConfig(),
) -> int:
    """Evaluate a relation for one detection against its image's objects.

    Pure and deterministic; ``Random`` depends only on (seed, detection
    index). ``image_objects`` must contain the objects of the detection's
    image across all categories.
    """
    if isinstance(rel, Constant):
        return rel.value
    if isinstance(rel, Random):
        return _hash_bit(rel.seed, det.detection.index)
    if isinstance(rel, CoOccurrence):
        return int(any(o.category == rel.category
                       for o in _context_objects(det, image_objects)))
    if isinstance(rel, Spatial):
        box = det.detection.box
        return int(any(
            o.category == rel.category
            and spatial_cell(box, o.box.center, cfg) == rel.cell
            for o in _context_objects(det, image_objects)
        ))
    if isinstance(rel, And):
        return eval_relation(rel.left, det, image_objects, cfg) & eval_relation(
            rel.right, det, image_objects, cfg
        )
    if isinstance(rel, Or):
        return eval_relation(rel.left, det, image_objects, cfg) | eval_relation(
            rel.right, det, image_objects, cfg
        )
    raise TypeError(f"unknown relation type: {type(rel).__name__}")


def enumerate_atomic_relations(
    categories: Sequence[str], cfg: SpatialFrameConfig = SpatialFrameConfig()
) -> list[Relation]:
    """All atomic candidates in deterministic order.

    ``Constant(0)`` first (the baseline is always a candidate), then per
    category its co-occurrence relation followed by every spatial cell in
    [-G, G] x [-G, G] row-major. For C categories this yields
    1 + C * (1 + (2G+1)^2) relations.
    """
    g = cfg.grid_extent
    out: list[Relation] = [Constant(0)]
    for category in categories:
        out.append(CoOccurrence(category))
        for v in range(-g, g + 1):
            for h in range(-g, g + 1):
                out.append(Spatial(category, (v, h)))
    return out


def compose_pairs(top_relations: Sequence[Relation], k: int) -> list[Relation]:
    """And/Or pairs over the ``k`` best composable relations.

    ``top_relations`` must already be ranked (best first). Constant and
    Random relations never participate in composition; the filter is
    applied before truncation so that exactly ``min(k, available)`` atoms
    are paired, giving k*(k-1)/2 pairs per connective.
    """
    atoms = [r for r in top_relations if isinstance(r, (CoOccurrence, Spatial))][:k]
    out: list[Relation] = []
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            out.append(And(atoms[i], atoms[j]))
            out.append(Or(atoms[i], atoms[j]))
    return out


def annotate_context(
    dets: Sequence[EvaluatedDetection],
    rel: Relation,
    bundle: DatasetBundle,
    cfg: SpatialFrameConfig = SpatialFrameConfig(),
) -> list[tuple[EvaluatedDetection, int]]:
    """Attach the relation's value to every detection, preserving order."""
    by_image = group_objects_by_image(bundle.objects)
    return [
        (det, eval_relation(rel, det, by_image.get(det.detection.image_id, ()), cfg))
        for det in dets
    ]


class ContextIndex:
    """Precomputed per-detection context features for fast relation sweeps.

    Searching thousands of candidate relations re-reads the same image
    geometry; this index walks each detection's objects once and answers
    any relation by set membership afterward. ``value`` agrees with
    :func:`eval_relation` for every relation (property-tested).
    """

    def __init__(
        self,
        dets: Sequence[EvaluatedDetection],
        objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
        cfg: SpatialFrameConfig = SpatialFrameConfig(),
    ) -> None:
        self._indices = [d.detection.index for d in dets]
        self._cooccur: list[frozenset] = []
        self._cells: list[frozenset] = []
        for det in dets:
            objs = objects_by_image.get(det.detection.image_id, ())
            cats = set()
            cells = set()
            box = det.detection.box
            for obj in _context_objects(det, objs):
                cats.add(obj.category)
                cells.add((obj.category, spatial_cell(box, obj.box.center, cfg)))
            self._cooccur.append(frozenset(cats))
            self._cells.append(frozenset(cells))

    def __len__(self) -> int:
        return len(self._indices)

    def value(self, rel: Relation, i: int) -> int:
        if isinstance(rel, Constant):
            return rel.value
        if isinstance(rel, Random):
            return _hash_bit(rel.seed, self._indices[i])
        if isinstance(rel, CoOccurrence):
            return int(rel.category in self._cooccur[i])
        if isinstance(rel, Spatial):
            return int((rel.category, rel.cell) in self._cells[i])
        if isinstance(rel, And):
            return self.value(rel.left, i) & self.value(rel.right, i)
        if isinstance(rel, Or):
            return self.value(rel.left, i) | self.value(rel.right, i)
        raise TypeError(f"unknown relation type: {type(rel).__name__}")

    def values(self, rel: Relation) -> list[int]:
        return [self.value(rel, i) for i in range(len(self._indices))]
