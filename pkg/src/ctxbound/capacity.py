"""Classification capacity: can a relation separate strong true detections
from strong false detections of a single error type?

A balanced set takes the n most confident true detections and the n most
confident false detections of one error type (n being the smaller side's
size). A binary relation groups the 2n detections by its value; each group
predicts the majority truth status of its members, and the accuracy of
those predictions is the relation's capacity. On a balanced set the
group-majority rule can never do worse than 0.5, so 0.5 means "no
separation at all" and a constant relation scores exactly that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .matching import ErrorType, EvaluatedDetection
from .relations import (
    ContextIndex,
    Relation,
    SpatialFrameConfig,
    eval_relation,
    relation_string,
)


class InsufficientSamples(ValueError):
    """Raised when a balanced set cannot be formed for an error type."""


@dataclass(frozen=True)
class CapacityResult:
    category: str
    relation: Relation
    error_type: ErrorType
    n: int
    accuracy: float


def select_balanced(
    dets: Sequence[EvaluatedDetection], error_type: ErrorType
) -> list[EvaluatedDetection]:
    """The n most confident detections from each side, trues first.

    n is the minimum of the available true detections and the available
    false detections of ``error_type``; confidence ties keep input order.
    """
    def top(side: list[EvaluatedDetection], n: int) -> list[EvaluatedDetection]:
        ranked = sorted(
            range(len(side)),
            key=lambda i: (-side[i].detection.confidence, side[i].detection.index, i),
        )
        return [side[i] for i in ranked[:n]]

    trues = [d for d in dets if d.is_true]
    falses = [d for d in dets if not d.is_true and d.error_type == error_type]
    n = min(len(trues), len(falses))
    if n == 0:
        raise InsufficientSamples(
            f"insufficient samples for error type {error_type.value}: "
            f"{len(trues)} true, {len(falses)} false"
        )
    return top(trues, n) + top(falses, n)


def _accuracy(values: Sequence[int], truths: Sequence[bool]) -> float:
    groups: dict[int, list[int]] = {}
    for value, is_true in zip(values, truths):
        counts = groups.setdefault(value, [0, 0])
        counts[0 if is_true else 1] += 1
    correct = sum(max(t, f) for t, f in groups.values())
    return correct / len(values)


def capacity(
    rel: Relation,
    balanced: Sequence[EvaluatedDetection],
    objects_by_image: Mapping[object, Sequence],
    cfg: SpatialFrameConfig = SpatialFrameConfig(),
) -> float:
    """Group-majority accuracy of one relation on a balanced set.

    Exact ties inside a group predict "true"; accuracy is unaffected by
    the tie direction, the choice only pins determinism.
    """
    values = [
        eval_relation(rel, d, objects_by_image.get(d.detection.image_id, ()), cfg)
        for d in balanced
    ]
    return _accuracy(values, [d.is_true for d in balanced])


def max_capacity(
    category: str,
    dets: Sequence[EvaluatedDetection],
    relations: Sequence[Relation],
    error_type: ErrorType,
    objects_by_image: Mapping[object, Sequence],
    cfg: SpatialFrameConfig = SpatialFrameConfig(),
) -> CapacityResult:
    """Best capacity over a relation pool; ties prefer the smallest
    canonical relation string."""
    balanced = select_balanced(dets, error_type)
    truths = [d.is_true for d in balanced]
    index = ContextIndex(balanced, objects_by_image, cfg)
    best_rel = None
    best_acc = -1.0
    for rel in relations:
        acc = _accuracy(index.values(rel), truths)
        if acc > best_acc or (
            acc == best_acc and relation_string(rel) < relation_string(best_rel)
        ):
            best_rel = rel
            best_acc = acc
    if best_rel is None:
        raise ValueError("relation pool is empty")
    return CapacityResult(category, best_rel, error_type, len(balanced) // 2, best_acc)
