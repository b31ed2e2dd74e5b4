"""Per-category search for the relation with the maximal AP upper bound.

For one category, the bound of a relation is obtained by attaching its
value to every evaluated detection, splitting the equal-positive
confidence bins by that value, re-ranking all bins by true/false ratio,
and reading the resulting AP. The improvement of a relation is its bound
minus the bound of the constant-zero relation (which re-ranks the plain
confidence bins, so it can already exceed the detector's raw AP).

Because relation values come from ground truth, even uninformative
relations drift upward; the random-context baseline measures that noise
floor so reported improvements can be judged against it.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .ap import (
    NoTrueDetections,
    ap_general,
    binary_grid,
    build_bins,
    confidence_ranges,
    discretize_confidence,
    heuristic_rank,
)
from .dataset import DatasetBundle, GroundTruthObject, group_objects_by_image
from .matching import EvaluatedDetection, MatchConfig, evaluate_bundle
from .relations import (
    Constant,
    ContextIndex,
    Random,
    Relation,
    SpatialFrameConfig,
    compose_pairs,
    enumerate_atomic_relations,
    eval_relation,
    relation_string,
)


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the bound search; defaults follow the standard protocol."""

    m1: int = 10
    iou_threshold: float = 0.5
    top_k: int = 50
    random_trials: int = 10
    random_seed: int = 0
    spatial: SpatialFrameConfig = SpatialFrameConfig()

    def __post_init__(self) -> None:
        if self.m1 < 1:
            raise ValueError("m1 must be at least 1")
        if self.top_k < 0:
            raise ValueError("top_k must be non-negative")
        if self.random_trials < 1:
            raise ValueError("random_trials must be at least 1")
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou_threshold must be in (0, 1]")


@dataclass(frozen=True)
class BoundResult:
    category: str
    relation: Relation
    ap_bound: float
    baseline_bound: float
    improvement: float
    degraded_bins: bool


@dataclass(frozen=True)
class RandomBaseline:
    """Mean and per-trial improvements under seeded random binary context."""

    mean: float
    trials: tuple[float, ...]

    def stdev(self) -> float:
        if len(self.trials) < 2:
            return 0.0
        return statistics.stdev(self.trials)


@dataclass(frozen=True)
class CategoryAnalysis:
    """Everything the reports need for one category."""

    category: str
    pos: int
    results: tuple[BoundResult, ...]
    random: RandomBaseline
    degraded: bool

    @property
    def best(self) -> BoundResult:
        return self.results[0]

    @property
    def baseline(self) -> float:
        return self.best.baseline_bound

    def relations(self) -> list[Relation]:
        return [r.relation for r in self.results]


class _CategoryEvaluator:
    """Caches the per-category work shared by every candidate relation.

    The confidence discretization depends only on the true detections, so
    thresholds, bin assignments, and the context feature index are built
    once; each relation then costs a single counting pass.
    """

    def __init__(
        self,
        dets: Sequence[EvaluatedDetection],
        objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
        pos: int,
        cfg: SearchConfig,
    ) -> None:
        self.dets = list(dets)
        self.pos = pos
        self.cfg = cfg
        base = [(d.detection.confidence, d.is_true) for d in self.dets]
        self.conf = discretize_confidence(base, cfg.m1)
        self.assignments = [self.conf.assign(c) for c, _ in base]
        self.truths = [d.is_true for d in self.dets]
        self.ranges = confidence_ranges(self.conf)
        self.index = ContextIndex(self.dets, objects_by_image, cfg.spatial)

    @property
    def degraded(self) -> bool:
        return self.conf.degraded

    def bound(self, rel: Relation) -> float:
        ctx = self.index.values(rel)
        grid = binary_grid(
            zip(self.assignments, self.truths, ctx),
            self.ranges,
            self.pos,
            self.cfg.m1,
            self.conf.degraded,
        )
        return ap_general(heuristic_rank(grid), self.pos)


def bound_for_relation(
    dets: Sequence[EvaluatedDetection],
    rel: Relation,
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
    pos: int,
    cfg: SearchConfig = SearchConfig(),
) -> float:
    """AP upper bound of one relation on one category's detections."""
    triples = [
        (
            d.detection.confidence,
            d.is_true,
            eval_relation(rel, d, objects_by_image.get(d.detection.image_id, ()), cfg.spatial),
        )
        for d in dets
    ]
    grid = build_bins(triples, cfg.m1, pos, "binary")
    return ap_general(heuristic_rank(grid), pos)


def baseline_bound(
    dets: Sequence[EvaluatedDetection],
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
    pos: int,
    cfg: SearchConfig = SearchConfig(),
) -> float:
    """Bound without context; the reference all improvements are against."""
    return bound_for_relation(dets, Constant(0), objects_by_image, pos, cfg)


def _search(
    category: str,
    evaluator: _CategoryEvaluator,
    candidate_categories: Sequence[str],
    cfg: SearchConfig,
) -> list[BoundResult]:
    atoms = enumerate_atomic_relations(candidate_categories, cfg.spatial)
    bounds = [(rel, evaluator.bound(rel)) for rel in atoms]
    baseline = next(b for rel, b in bounds if rel == Constant(0))
    ranked_atoms = [
        rel for rel, _ in sorted(bounds, key=lambda rb: (-rb[1], relation_string(rb[0])))
    ]
    composites = compose_pairs(ranked_atoms, cfg.top_k)
    bounds.extend((rel, evaluator.bound(rel)) for rel in composites)
    results = [
        BoundResult(category, rel, b, baseline, b - baseline, evaluator.degraded)
        for rel, b in bounds
    ]
    results.sort(key=lambda r: (-r.ap_bound, relation_string(r.relation)))
    return results


def best_relation_search(
    category: str,
    dets: Sequence[EvaluatedDetection],
    candidate_categories: Sequence[str],
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
    pos: int,
    cfg: SearchConfig = SearchConfig(),
) -> list[BoundResult]:
    """Rank every candidate relation for one category, best bound first.

    Phase one scores all atomic relations over ``candidate_categories``;
    phase two adds and/or pairs of the ``top_k`` best composable atoms.
    Ties order by the relation's canonical string.
    """
    evaluator = _CategoryEvaluator(dets, objects_by_image, pos, cfg)
    return _search(category, evaluator, candidate_categories, cfg)


def random_baseline(
    dets: Sequence[EvaluatedDetection],
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
    pos: int,
    cfg: SearchConfig = SearchConfig(),
) -> RandomBaseline:
    """Mean improvement of seeded random binary context over the trials."""
    evaluator = _CategoryEvaluator(dets, objects_by_image, pos, cfg)
    return _random_from_evaluator(evaluator, cfg)


def _random_from_evaluator(
    evaluator: _CategoryEvaluator, cfg: SearchConfig
) -> RandomBaseline:
    baseline = evaluator.bound(Constant(0))
    trials = tuple(
        evaluator.bound(Random(cfg.random_seed + trial)) - baseline
        for trial in range(1, cfg.random_trials + 1)
    )
    return RandomBaseline(statistics.fmean(trials), trials)


def analyze_category(
    category: str,
    dets: Sequence[EvaluatedDetection],
    candidate_categories: Sequence[str],
    objects_by_image: Mapping[object, Sequence[GroundTruthObject]],
    pos: int,
    cfg: SearchConfig = SearchConfig(),
) -> CategoryAnalysis:
    """Full per-category analysis: relation ranking plus the noise floor."""
    evaluator = _CategoryEvaluator(dets, objects_by_image, pos, cfg)
    results = _search(category, evaluator, candidate_categories, cfg)
    random = _random_from_evaluator(evaluator, cfg)
    return CategoryAnalysis(
        category, pos, tuple(results), random, evaluator.degraded
    )


def analyze_bundle(
    bundle: DatasetBundle, cfg: SearchConfig = SearchConfig()
) -> tuple[dict[str, CategoryAnalysis], dict[str, str]]:
    """Analyze every category of a bundle at the configured IoU threshold.

    Returns (analyses, skipped); categories without ground truth or
    without matched detections are skipped with a reason instead of
    failing the run.
    """
    evaluated = evaluate_bundle(bundle, MatchConfig(cfg.iou_threshold))
    by_category: dict[str, list[EvaluatedDetection]] = {}
    for ev in evaluated:
        by_category.setdefault(ev.detection.category, []).append(ev)
    objects_by_image = group_objects_by_image(bundle.objects)
    pos_by_category: dict[str, int] = {}
    for obj in bundle.objects:
        pos_by_category[obj.category] = pos_by_category.get(obj.category, 0) + 1

    analyses: dict[str, CategoryAnalysis] = {}
    skipped: dict[str, str] = {}
    for category in bundle.categories:
        pos = pos_by_category.get(category, 0)
        if pos == 0:
            skipped[category] = "no ground-truth objects"
            continue
        dets = by_category.get(category, [])
        try:
            analyses[category] = analyze_category(
                category, dets, bundle.categories, objects_by_image, pos, cfg
            )
        except NoTrueDetections:
            skipped[category] = "no matched detections"
    return analyses, skipped


@dataclass(frozen=True)
class SweepResult:
    thresholds: tuple[float, ...]
    analyses: Mapping[float, Mapping[str, CategoryAnalysis]]
    skipped: Mapping[float, Mapping[str, str]]


def iou_sweep(
    bundle: DatasetBundle,
    cfg: SearchConfig,
    thresholds: Sequence[float],
) -> SweepResult:
    """Re-run matching and the full search at each IoU threshold."""
    analyses = {}
    skipped = {}
    for threshold in thresholds:
        cfg_t = replace(cfg, iou_threshold=threshold)
        analyses[threshold], skipped[threshold] = analyze_bundle(bundle, cfg_t)
    return SweepResult(tuple(thresholds), analyses, skipped)
