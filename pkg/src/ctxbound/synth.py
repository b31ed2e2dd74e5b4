"""Synthetic scenes with planted contextual signal and controlled errors.

The generator builds ground truth and detections whose statistics are
known by construction, so downstream claims (bound improvements, error
capacities) can be checked against planted truth:

* Each image is independently "positive" for each detected category; a
  positive image holds a sampled number of well-separated objects, and
  every object gets one true detection jittered to stay above the match
  threshold.
* False detections are manufactured per configured error-type mixture.
  Localization errors are jittered copies of an object landing strictly
  between the 0.1 overlap floor and the match threshold, so they live in
  positive images alongside the true detections. Class confusions sit on
  an object of a different category, and background errors are boxes
  overlapping nothing by more than 0.1; both are placed in images without
  the target category.
* For every planted (category, context category, rho) pair, one context
  object is inserted with probability rho into images positive for the
  category and probability 1 - rho otherwise. rho = 1 makes co-occurrence
  of the context category equal the truth label for background-error
  data; rho = 0.5 makes it independent of truth.

Each candidate false detection is verified against the actual error-type
rules before being emitted, so generated data classifies into exactly the
configured types. A fixed seed yields a byte-identical bundle.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import (
    BoundingBox,
    DatasetBundle,
    Detection,
    GroundTruthObject,
    ImageInfo,
)
from .matching import ERROR_OVERLAP_FLOOR, ErrorType, iou


class GenerationError(Exception):
    """Raised when a configuration cannot be realized (e.g. image too small)."""


@dataclass(frozen=True)
class PlantedPair:
    category: str
    context_category: str
    rho: float

    def __post_init__(self) -> None:
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must be in [0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs; see the module docstring for the scene scheme.

    ``categories`` maps each detected category to its per-positive-image
    object count range (inclusive). ``error_weights`` orders as
    (localization, class confusion, background) and must sum to one.
    Confidence models are (mean, spread) of a clipped normal.
    """

    num_images: int = 120
    image_width: float = 640.0
    image_height: float = 480.0
    categories: Mapping[str, tuple[int, int]] = field(
        default_factory=lambda: {"widget": (1, 2)}
    )
    positive_rate: float = 0.5
    planted: tuple[PlantedPair, ...] = ()
    error_weights: tuple[float, float, float] = (0.0, 0.0, 1.0)
    falses_per_true: float = 1.0
    box_size: tuple[float, float] = (40.0, 110.0)
    true_jitter: float = 0.12
    localization_jitter: tuple[float, float] = (0.2, 0.75)
    true_conf: tuple[float, float] = (0.70, 0.15)
    false_conf: tuple[float, float] = (0.50, 0.15)
    match_iou: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_images < 1:
            raise ValueError("num_images must be at least 1")
        if not self.categories:
            raise ValueError("at least one detected category is required")
        if any(w < 0 for w in self.error_weights) or not math.isclose(
            sum(self.error_weights), 1.0, abs_tol=1e-9
        ):
            raise ValueError("error_weights must be non-negative and sum to 1")
        if not 0 <= self.positive_rate <= 1:
            raise ValueError("positive_rate must be in [0, 1]")
        if not 0 < self.match_iou <= 1:
            raise ValueError("match_iou must be in (0, 1]")
        for name, (lo, hi) in self.categories.items():
            if lo < 1 or hi < lo:
                raise ValueError(f"bad object count range for {name!r}")


_PLACEMENT_ATTEMPTS = 500
# Free space required around every placed object, as a multiple of box
# size; keeps jittered detections from grazing unrelated objects.
_CLEARANCE = 1.0


@dataclass
class _Scene:
    image_id: int
    objects: list[GroundTruthObject]
    positive_for: set[str]


def _clear_of(box: BoundingBox, others: Sequence[GroundTruthObject]) -> bool:
    pad_w = box.w * _CLEARANCE
    pad_h = box.h * _CLEARANCE
    ax1, ay1 = box.x - pad_w, box.y - pad_h
    ax2, ay2 = box.x + box.w + pad_w, box.y + box.h + pad_h
    for other in others:
        b = other.box
        if ax1 < b.x + b.w and b.x < ax2 and ay1 < b.y + b.h and b.y < ay2:
            return False
    return True


def _place_object(rng: random.Random, cfg: SynthConfig, scene: _Scene) -> BoundingBox:
    for _ in range(_PLACEMENT_ATTEMPTS):
        w = rng.uniform(*cfg.box_size)
        h = rng.uniform(*cfg.box_size)
        if w >= cfg.image_width or h >= cfg.image_height:
            continue
        x = rng.uniform(0, cfg.image_width - w)
        y = rng.uniform(0, cfg.image_height - h)
        box = BoundingBox(x, y, w, h)
        if _clear_of(box, scene.objects):
            return box
    raise GenerationError(
        f"infeasible placement: image {scene.image_id} too small for the "
        "requested object density"
    )


def _conf(rng: random.Random, model: tuple[float, float]) -> float:
    mean, spread = model
    return min(0.999, max(0.001, rng.gauss(mean, spread)))


def _max_overlap(box: BoundingBox, objects: Sequence[GroundTruthObject]):
    best = None
    best_iou = 0.0
    for obj in objects:
        v = iou(box, obj.box)
        if v > best_iou:
            best, best_iou = obj, v
    return best_iou, best


def _jitter_true(
    rng: random.Random, cfg: SynthConfig, obj: GroundTruthObject
) -> BoundingBox:
    box = obj.box
    for _ in range(_PLACEMENT_ATTEMPTS):
        dx = rng.uniform(-cfg.true_jitter, cfg.true_jitter) * box.w
        dy = rng.uniform(-cfg.true_jitter, cfg.true_jitter) * box.h
        sw = 1 + rng.uniform(-cfg.true_jitter, cfg.true_jitter) / 2
        sh = 1 + rng.uniform(-cfg.true_jitter, cfg.true_jitter) / 2
        cand = BoundingBox(box.x + dx, box.y + dy, box.w * sw, box.h * sh)
        if iou(cand, box) > cfg.match_iou + 0.02:
            return cand
    raise GenerationError("could not jitter a true detection above the threshold")


def _make_localization(
    rng: random.Random, cfg: SynthConfig, category: str, scenes: list[_Scene]
) -> tuple[int, BoundingBox]:
    anchors = [
        (scene, obj)
        for scene in scenes
        for obj in scene.objects
        if obj.category == category
    ]
    if not anchors:
        raise GenerationError(
            f"no {category!r} objects available to anchor localization errors"
        )
    low = ERROR_OVERLAP_FLOOR + 0.02
    high = cfg.match_iou - 0.03
    if low >= high:
        raise GenerationError("match_iou leaves no room for localization errors")
    for _ in range(_PLACEMENT_ATTEMPTS):
        scene, obj = anchors[rng.randrange(len(anchors))]
        box = obj.box
        s = rng.uniform(*cfg.localization_jitter)
        dx = s * box.w * (1 if rng.random() < 0.5 else -1)
        dy = rng.uniform(-0.3, 0.3) * s * box.h
        cand = BoundingBox(box.x + dx, box.y + dy, box.w, box.h)
        best_iou, best = _max_overlap(cand, scene.objects)
        if best is not None and best.category == category and low < best_iou < high:
            return scene.image_id, cand
    raise GenerationError("could not realize a localization error")


def _make_class_confusion(
    rng: random.Random, cfg: SynthConfig, category: str, scenes: list[_Scene]
) -> tuple[int, BoundingBox]:
    hosts = [
        (scene, obj)
        for scene in scenes
        if not any(o.category == category for o in scene.objects)
        for obj in scene.objects
        if obj.category != category
    ]
    if not hosts:
        raise GenerationError(
            f"no foreign objects outside {category!r} images to confuse with"
        )
    for _ in range(_PLACEMENT_ATTEMPTS):
        scene, obj = hosts[rng.randrange(len(hosts))]
        box = obj.box
        dx = rng.uniform(-0.05, 0.05) * box.w
        dy = rng.uniform(-0.05, 0.05) * box.h
        cand = BoundingBox(box.x + dx, box.y + dy, box.w, box.h)
        best_iou, best = _max_overlap(cand, scene.objects)
        if (
            best is not None
            and best.category != category
            and best_iou > ERROR_OVERLAP_FLOOR + 0.02
        ):
            return scene.image_id, cand
    raise GenerationError("could not realize a class confusion")


def _make_background(
    rng: random.Random, cfg: SynthConfig, category: str, scenes: list[_Scene]
) -> tuple[int, BoundingBox]:
    hosts = [
        scene
        for scene in scenes
        if not any(o.category == category for o in scene.objects)
    ]
    if not hosts:
        raise GenerationError(
            f"every image contains {category!r}; nowhere to place background errors"
        )
    for _ in range(_PLACEMENT_ATTEMPTS):
        scene = hosts[rng.randrange(len(hosts))]
        w = rng.uniform(*cfg.box_size)
        h = rng.uniform(*cfg.box_size)
        if w >= cfg.image_width or h >= cfg.image_height:
            continue
        x = rng.uniform(0, cfg.image_width - w)
        y = rng.uniform(0, cfg.image_height - h)
        cand = BoundingBox(x, y, w, h)
        best_iou, _ = _max_overlap(cand, scene.objects)
        if best_iou < ERROR_OVERLAP_FLOOR - 0.02:
            return scene.image_id, cand
    raise GenerationError("could not realize a background error")


_MAKERS = {
    ErrorType.LOCALIZATION: _make_localization,
    ErrorType.CLASS_CONFUSION: _make_class_confusion,
    ErrorType.BACKGROUND: _make_background,
}


def generate(cfg: SynthConfig) -> DatasetBundle:
    """Generate a bundle realizing the configuration; deterministic per seed."""
    rng = random.Random(cfg.seed)
    detected = list(cfg.categories)
    context_only = [
        p.context_category
        for p in cfg.planted
        if p.context_category not in cfg.categories
    ]
    context_only = list(dict.fromkeys(context_only))
    categories = detected + context_only

    scenes: list[_Scene] = []
    next_object = 1
    for image_id in range(1, cfg.num_images + 1):
        scene = _Scene(image_id, [], set())
        for name in detected:
            if rng.random() >= cfg.positive_rate:
                continue
            scene.positive_for.add(name)
            lo, hi = cfg.categories[name]
            for _ in range(rng.randint(lo, hi)):
                box = _place_object(rng, cfg, scene)
                scene.objects.append(
                    GroundTruthObject(next_object, image_id, name, box)
                )
                next_object += 1
        scenes.append(scene)

    for pair in cfg.planted:
        for scene in scenes:
            p = pair.rho if pair.category in scene.positive_for else 1 - pair.rho
            if rng.random() < p:
                box = _place_object(rng, cfg, scene)
                scene.objects.append(
                    GroundTruthObject(next_object, scene.image_id, pair.context_category, box)
                )
                next_object += 1

    raw: list[tuple[object, str, BoundingBox, float]] = []
    weights = list(cfg.error_weights)
    types = list(_MAKERS)
    for name in detected:
        n_true = 0
        for scene in scenes:
            for obj in scene.objects:
                if obj.category != name:
                    continue
                box = _jitter_true(rng, cfg, obj)
                raw.append((scene.image_id, name, box, _conf(rng, cfg.true_conf)))
                n_true += 1
        n_false = round(cfg.falses_per_true * n_true)
        for _ in range(n_false):
            error_type = rng.choices(types, weights=weights)[0]
            image_id, box = _MAKERS[error_type](rng, cfg, name, scenes)
            raw.append((image_id, name, box, _conf(rng, cfg.false_conf)))

    detections = tuple(
        Detection(image_id, name, box, conf, index=i)
        for i, (image_id, name, box, conf) in enumerate(raw)
    )
    images = tuple(
        ImageInfo(s.image_id, cfg.image_width, cfg.image_height) for s in scenes
    )
    objects = tuple(obj for scene in scenes for obj in scene.objects)
    category_ids = {name: i + 1 for i, name in enumerate(categories)}
    return DatasetBundle(images, objects, tuple(categories), detections, category_ids)


def parse_config_text(text: str) -> SynthConfig:
    """Parse the flat ``key = value`` generator config format.

    Lines starting with ``#`` and blank lines are ignored. Lists use
    commas; ``categories`` entries are ``name:lo-hi`` and ``planted``
    entries are ``category:context_category:rho``. Example::

        num_images = 200
        categories = gadget:1-2, widget:1-1
        planted = gadget:beacon:1.0
        error_weights = 0.2, 0.2, 0.6
        seed = 7
    """
    values: dict[str, object] = {}

    def floats(raw: str, n: int, key: str) -> tuple[float, ...]:
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != n:
            raise GenerationError(f"{key}: expected {n} comma-separated values")
        return tuple(float(p) for p in parts)

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise GenerationError(f"line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        try:
            if key in ("num_images", "seed"):
                values[key] = int(raw)
            elif key in (
                "image_width", "image_height", "positive_rate",
                "falses_per_true", "true_jitter", "match_iou",
            ):
                values[key] = float(raw)
            elif key in ("box_size", "localization_jitter", "true_conf", "false_conf"):
                values[key] = floats(raw, 2, key)
            elif key == "error_weights":
                values[key] = floats(raw, 3, key)
            elif key == "categories":
                cats: dict[str, tuple[int, int]] = {}
                for item in raw.split(","):
                    name, _, counts = item.strip().partition(":")
                    lo, _, hi = counts.partition("-")
                    cats[name.strip()] = (int(lo), int(hi or lo))
                values[key] = cats
            elif key == "planted":
                pairs = []
                for item in raw.split(","):
                    cat, ctx, rho = (p.strip() for p in item.strip().split(":"))
                    pairs.append(PlantedPair(cat, ctx, float(rho)))
                values[key] = tuple(pairs)
            else:
                raise GenerationError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, GenerationError) as exc:
            if isinstance(exc, GenerationError):
                raise
            raise GenerationError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return SynthConfig(**values)
    except (TypeError, ValueError) as exc:
        raise GenerationError(f"invalid generator config: {exc}") from exc
