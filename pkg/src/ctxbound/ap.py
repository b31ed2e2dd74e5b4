"""Bin-based average precision: discretization, ranking, and exact ordering search.

AP is reported on a 0-100 scale as the area under the precision/recall
curve, approximated by a Riemann sum over ranked bins. A bin holds counts
``t`` and ``f`` of true and false detections; an ordering of bins induces
cumulative precisions and recall widths whose products sum to the AP.

The confidence axis is discretized into bins holding (as nearly as ties
allow) equal numbers of true detections, a context axis can sub-split each
confidence bin, and bins are then re-ranked. Ranking by decreasing t/f is
provably AP-maximal when every bin holds the same number of true
detections; with unequal bins it is only a heuristic, so an exact search
over all bin orderings is provided as the reference.

Detections scored below the least-confident true detection fall outside
every bin. They cannot change any ordering's AP (a bin without positives
adds recall width zero and is optimally placed last), so dropping them is
what makes the bin-based forms agree with the plain ranked computation.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class NoTrueDetections(ValueError):
    """Raised when a category has no matched detections to discretize."""


@dataclass(frozen=True)
class Bin:
    """Counts of true/false detections inside one cell of the score space.

    ``confidence_range`` is the half-open interval [low, high) of detector
    scores; ``context_slot`` is the binary context value, a context-value
    interval, or None when no context axis exists. ``index`` is the stable
    position within the grid, used for deterministic tie-breaks.
    """

    index: int
    t: int
    f: int
    confidence_range: tuple[float, float] = (-math.inf, math.inf)
    context_slot: object = None


@dataclass(frozen=True)
class BinGrid:
    """A discretized confidence (x context) space with per-bin counts.

    ``pos`` is the total number of ground-truth objects, the recall
    denominator; the sum of ``t`` over bins never exceeds it. ``degraded``
    reports that ties or scarce positives forced fewer bins than requested.
    """

    bins: tuple[Bin, ...]
    pos: int
    m1: int
    context_mode: str = "binary"
    degraded: bool = False


@dataclass(frozen=True)
class RankedBinSequence:
    """Bins in ranking order together with the scores that induced it."""

    bins: tuple[Bin, ...]
    scores: tuple[float, ...]

    def curve(self, pos: int) -> list[tuple[float, float, float]]:
        """Per-position (recall, precision, recall width) along the ranking."""
        out = []
        cum_t = cum_f = 0
        r_prev = 0.0
        for b in self.bins:
            cum_t += b.t
            cum_f += b.f
            p = cum_t / (cum_t + cum_f) if cum_t + cum_f else 0.0
            r = cum_t / pos
            out.append((r, p, r - r_prev))
            r_prev = r
        return out


@dataclass(frozen=True)
class ConfidenceBins:
    """Equal-positive confidence thresholds.

    ``thresholds`` are decreasing; bin i spans [thresholds[i],
    thresholds[i-1]) with the first bin open above. ``assign`` returns the
    bin of a score, or None below the last threshold.
    """

    thresholds: tuple[float, ...]
    positive_counts: tuple[int, ...]
    requested: int

    @property
    def degraded(self) -> bool:
        return len(self.thresholds) < self.requested

    def assign(self, confidence: float) -> int | None:
        keys = [-t for t in self.thresholds]
        i = bisect_left(keys, -confidence)
        return i if i < len(keys) else None


def _equal_count_cuts(group_counts: Sequence[int], m: int) -> list[int]:
    """Positions (cut after group g) splitting groups into balanced segments.

    Targets are total/m positives per segment with the remainder given to
    the earliest segments; each ideal boundary snaps to the nearest
    feasible group boundary (earlier on ties) and duplicates collapse, so
    heavy tie groups degrade the segment count instead of being split.
    """
    total = sum(group_counts)
    m_eff = min(m, len(group_counts))
    if m_eff <= 1:
        return []
    base, rem = divmod(total, m_eff)
    targets = [base + 1] * rem + [base] * (m_eff - rem)
    ideal = []
    acc = 0
    for size in targets[:-1]:
        acc += size
        ideal.append(acc)
    feasible = []
    acc = 0
    for count in group_counts[:-1]:
        acc += count
        feasible.append(acc)
    cuts: set[int] = set()
    for q in ideal:
        g = min(range(len(feasible)), key=lambda g: (abs(feasible[g] - q), g))
        cuts.add(g)
    return sorted(cuts)


def _grouped(values: Sequence[float]) -> tuple[list[float], list[int]]:
    """Distinct values and their run lengths; input must be pre-sorted."""
    distinct: list[float] = []
    counts: list[int] = []
    for v in values:
        if distinct and distinct[-1] == v:
            counts[-1] += 1
        else:
            distinct.append(v)
            counts.append(1)
    return distinct, counts


def discretize_confidence(
    dets: Sequence[tuple[float, bool]], m1: int
) -> ConfidenceBins:
    """Place confidence thresholds so bins hold balanced true-detection counts.

    ``dets`` are (confidence, is_true) pairs. Thresholds sit only between
    distinct confidence values, so tied detections never split across
    bins; when ties or scarcity make ``m1`` bins impossible the count
    degrades and is reported via :attr:`ConfidenceBins.degraded`.

    Raises :class:`NoTrueDetections` when no pair is true.
    """
    if m1 < 1:
        raise ValueError("m1 must be at least 1")
    positives = sorted((c for c, is_true in dets if is_true), reverse=True)
    if not positives:
        raise NoTrueDetections("category has no matched detections")
    values, counts = _grouped(positives)
    cuts = _equal_count_cuts(counts, m1)
    boundaries = cuts + [len(values) - 1]
    thresholds = tuple(values[g] for g in boundaries)
    bin_counts = []
    prev = 0
    for g in boundaries:
        upto = sum(counts[: g + 1])
        bin_counts.append(upto - prev)
        prev = upto
    return ConfidenceBins(thresholds, tuple(bin_counts), m1)


def _context_split(
    members: Sequence[tuple[float, bool]], m2: int
) -> list[tuple[tuple[float, float], int, int]]:
    """Split one confidence bin along the context axis into equal-positive
    intervals covering the whole axis; returns (interval, t, f) triples."""
    positives = sorted(v for v, is_true in members if is_true)
    if not positives:
        return [((-math.inf, math.inf), 0, sum(1 for _ in members))]
    values, counts = _grouped(positives)
    cuts = _equal_count_cuts(counts, m2)
    # Upper edge of each interval is the value right after the cut group.
    uppers = [values[g + 1] for g in cuts] + [math.inf]
    lowers = [-math.inf] + uppers[:-1]
    out = []
    for low, high in zip(lowers, uppers):
        t = sum(1 for v, is_true in members if is_true and low <= v < high)
        f = sum(1 for v, is_true in members if not is_true and low <= v < high)
        out.append(((low, high), t, f))
    return out


def confidence_ranges(conf: ConfidenceBins) -> list[tuple[float, float]]:
    """Half-open [low, high) score interval of each confidence bin."""
    out = []
    for i, low in enumerate(conf.thresholds):
        high = math.inf if i == 0 else conf.thresholds[i - 1]
        out.append((low, high))
    return out


def binary_grid(
    entries,
    ranges: Sequence[tuple[float, float]],
    pos: int,
    m1: int,
    degraded: bool,
) -> BinGrid:
    """Assemble a binary-context grid from per-detection assignments.

    ``entries`` yields (confidence bin or None, is_true, context value)
    per detection; None marks detections outside the binned score range.
    Each confidence bin splits into its context-0 cell followed by its
    context-1 cell, empty cells dropped.
    """
    counts = [[0, 0, 0, 0] for _ in ranges]  # t0, f0, t1, f1
    for at, is_true, ctx in entries:
        if ctx not in (0, 1):
            raise ValueError(
                f"binary context expected, got {ctx!r}; use an integer "
                "context bin count for real-valued context"
            )
        if at is None:
            continue
        slot = counts[at]
        k = (2 if ctx == 1 else 0) + (0 if is_true else 1)
        slot[k] += 1
    bins: list[Bin] = []
    for i, (t0, f0, t1, f1) in enumerate(counts):
        if t0 or f0:
            bins.append(Bin(len(bins), t0, f0, ranges[i], 0))
        if t1 or f1:
            bins.append(Bin(len(bins), t1, f1, ranges[i], 1))
    return BinGrid(tuple(bins), pos, m1, "binary", degraded)


def build_bins(
    dets_with_context: Sequence[tuple[float, bool, float]],
    m1: int,
    pos: int,
    context: str | int = "binary",
) -> BinGrid:
    """Discretize (confidence, context) triples into a bin grid.

    ``context="binary"`` splits each confidence bin by the two context
    values; an integer ``m2`` splits each confidence bin into ``m2``
    equal-positive context intervals instead. Empty cells are dropped;
    detections below the last confidence threshold fall outside the grid.
    """
    base = [(c, is_true) for c, is_true, _ in dets_with_context]
    conf = discretize_confidence(base, m1)
    assignments = [conf.assign(c) for c, _, _ in dets_with_context]
    ranges = confidence_ranges(conf)

    if context == "binary":
        entries = (
            (at, is_true, ctx)
            for at, (_, is_true, ctx) in zip(assignments, dets_with_context)
        )
        return binary_grid(entries, ranges, pos, m1, conf.degraded)

    m2 = int(context)
    if m2 < 1:
        raise ValueError("context bin count must be at least 1")
    members: list[list[tuple[float, bool]]] = [[] for _ in ranges]
    for at, (_, is_true, ctx) in zip(assignments, dets_with_context):
        if at is not None:
            members[at].append((ctx, is_true))
    bins: list[Bin] = []
    degraded = conf.degraded
    for i in range(len(ranges)):
        slots = _context_split(members[i], m2)
        if len(slots) < m2:
            degraded = True
        for interval, t, f in slots:
            if t or f:
                bins.append(Bin(len(bins), t, f, ranges[i], interval))
    return BinGrid(tuple(bins), pos, m1, f"real({m2})", degraded)


def heuristic_rank(grid: BinGrid) -> RankedBinSequence:
    """Order bins by decreasing t/f score.

    Bins without false detections score infinity and come first; adding
    false mass only after them cannot lower any earlier precision, so
    their mutual order is immaterial and is fixed (decreasing t, then
    index) for determinism. Score ties also break by bin index.
    """
    def key(b: Bin):
        if b.f == 0:
            return (0, -b.t, b.index)
        return (1, -(b.t / b.f), b.index)

    ordered = tuple(sorted(grid.bins, key=key))
    scores = tuple(math.inf if b.f == 0 else b.t / b.f for b in ordered)
    return RankedBinSequence(ordered, scores)


def rank_by_index(grid: BinGrid) -> RankedBinSequence:
    """Bins in grid order (decreasing confidence), scored but not re-ranked."""
    scores = tuple(math.inf if b.f == 0 else b.t / b.f for b in grid.bins)
    return RankedBinSequence(grid.bins, scores)


def ap_general(ranked: RankedBinSequence, pos: int) -> float:
    """AP as a Riemann sum over ranked bins with recall-proportional widths.

    Handles unequal true counts; bins without positives contribute zero
    width but still inflate later precisions. Recall never reached because
    of missed objects simply leaves the sum short, which equals treating
    those levels as zero precision.
    """
    if pos <= 0:
        raise ValueError("pos must be positive")
    cum_t = cum_f = 0
    total = 0.0
    r_prev = 0.0
    for b in ranked.bins:
        cum_t += b.t
        cum_f += b.f
        if cum_t + cum_f == 0:
            continue
        p = cum_t / (cum_t + cum_f)
        r = cum_t / pos
        total += p * (r - r_prev)
        r_prev = r
    return 100.0 * total


def ap_general_exact(bins: Sequence[Bin], pos: int) -> Fraction:
    """Exact rational value of :func:`ap_general` on the 0-100 scale."""
    if pos <= 0:
        raise ValueError("pos must be positive")
    cum_t = cum_f = 0
    total = Fraction(0)
    r_prev = Fraction(0)
    for b in bins:
        cum_t += b.t
        cum_f += b.f
        if cum_t + cum_f == 0:
            continue
        r = Fraction(cum_t, pos)
        total += Fraction(cum_t, cum_t + cum_f) * (r - r_prev)
        r_prev = r
    return 100 * total


def ap_equal_bins(ranked: RankedBinSequence, m: int) -> float:
    """Mean precision over ``m`` equally spaced recall levels.

    Requires every bin to hold the same positive count; recall levels
    beyond the available bins (missed objects) contribute zero precision.
    """
    ts = {b.t for b in ranked.bins}
    if len(ts) != 1:
        raise ValueError(
            "bins hold unequal true counts; use ap_general for this grid"
        )
    t = ts.pop()
    if t <= 0:
        raise ValueError("equal-bin AP needs positive true counts per bin")
    if m < len(ranked.bins):
        raise ValueError("m must cover all bins")
    cum_f = 0
    total = 0.0
    for i, b in enumerate(ranked.bins, start=1):
        cum_f += b.f
        total += (i * t) / (i * t + cum_f)
    return 100.0 * total / m


def ap_naive(dets: Sequence[tuple[float, bool]], pos: int) -> float:
    """AP of the raw ranking, sampling precision at every true detection.

    ``dets`` are (confidence, is_true) pairs; confidence ties keep input
    order. This is the finest-grained AP and the independent reference for
    the bin-based forms.
    """
    if pos <= 0:
        raise ValueError("pos must be positive")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][0], i))
    tp = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if dets[i][1]:
            tp += 1
            total += tp / rank
    return 100.0 * total / pos


MAX_ORACLE_BINS = 10


def permutation_oracle(grid: BinGrid) -> tuple[tuple[int, ...], float]:
    """Exact maximum AP over every ordering of the grid's bins.

    Returns (ordering of bin indices, AP). The search space is all
    permutations; shared prefixes are collapsed through a subset dynamic
    program (a prefix's cumulative counts depend only on its member set),
    which visits every ordering implicitly and is validated against
    literal enumeration in the test suite. Arithmetic is exact rational,
    and among maximal orderings the lexicographically smallest is
    returned.

    Guarded at 10 bins; beyond that the ordering space is impractical.
    """
    n = len(grid.bins)
    if n > MAX_ORACLE_BINS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_BINS} bins, got {n}")
    if n == 0:
        return ((), 0.0)
    if grid.pos <= 0:
        raise ValueError("pos must be positive")

    t = [b.t for b in grid.bins]
    f = [b.f for b in grid.bins]
    full = (1 << n) - 1
    cum_t = [0] * (full + 1)
    cum_f = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        i = low.bit_length() - 1
        cum_t[mask] = cum_t[mask ^ low] + t[i]
        cum_f[mask] = cum_f[mask ^ low] + f[i]

    widths = [Fraction(ti, grid.pos) for ti in t]

    def precision(mask: int) -> Fraction:
        denom = cum_t[mask] + cum_f[mask]
        return Fraction(cum_t[mask], denom) if denom else Fraction(0)

    # best[S] = maximal AP contribution of the last |S| positions when the
    # suffix set is S (so the prefix is its complement).
    best = [Fraction(0)] * (full + 1)
    for suffix in range(1, full + 1):
        placed = full ^ suffix
        candidate = None
        rest = suffix
        while rest:
            low = rest & -rest
            rest ^= low
            i = low.bit_length() - 1
            value = precision(placed | low) * widths[i] + best[suffix ^ low]
            if candidate is None or value > candidate:
                candidate = value
        best[suffix] = candidate

    ordering: list[int] = []
    suffix = full
    while suffix:
        rest = suffix
        placed = full ^ suffix
        while rest:
            low = rest & -rest
            rest ^= low
            i = low.bit_length() - 1
            if precision(placed | low) * widths[i] + best[suffix ^ low] == best[suffix]:
                ordering.append(i)
                suffix ^= low
                break
    return tuple(ordering), float(100 * best[full])


def grid_from_counts(
    counts: Sequence[tuple[int, int]], pos: int, m1: int | None = None
) -> BinGrid:
    """Build a grid directly from (t, f) pairs; handy for fixtures and
    ordering experiments where the score ranges are irrelevant."""
    n = len(counts)
    bins = tuple(
        Bin(i, t, f, (float(n - 1 - i), float(n - i)), None)
        for i, (t, f) in enumerate(counts)
    )
    return BinGrid(bins, pos, m1 if m1 is not None else n, "none", False)
