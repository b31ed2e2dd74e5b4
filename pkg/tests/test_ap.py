import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbound.ap import (
    NoTrueDetections,
    ap_equal_bins,
    ap_general,
    ap_general_exact,
    ap_naive,
    build_bins,
    discretize_confidence,
    grid_from_counts,
    heuristic_rank,
    permutation_oracle,
    rank_by_index,
)

# The three-bin fixture where ranking by t/f is measurably non-optimal.
COUNTEREXAMPLE = [(277, 16), (371, 955), (69, 178)]
COUNTEREXAMPLE_POS = 717


class TestDiscretizeConfidence:
    def test_even_split(self):
        dets = [(c / 10, True) for c in range(10, 0, -1)]
        cb = discretize_confidence(dets, 5)
        assert cb.positive_counts == (2, 2, 2, 2, 2)
        assert not cb.degraded

    def test_remainder_to_top(self):
        dets = [(c / 100, True) for c in range(90, 79, -1)]  # 11 positives
        cb = discretize_confidence(dets, 5)
        assert cb.positive_counts == (3, 2, 2, 2, 2)

    def test_inseparable_ties_degrade(self):
        dets = [(0.5, True)] * 4 + [(0.9, False)]
        cb = discretize_confidence(dets, 2)
        assert cb.positive_counts == (4,)
        assert cb.degraded

    def test_tie_block_in_middle(self):
        confs = [0.9] + [0.5] * 8 + [0.1]
        cb = discretize_confidence([(c, True) for c in confs], 5)
        assert cb.positive_counts == (1, 8, 1)
        assert cb.degraded

    def test_no_true_detections(self):
        with pytest.raises(NoTrueDetections, match="no matched detections"):
            discretize_confidence([(0.9, False)], 3)

    def test_assignment_edges(self):
        dets = [(0.9, True), (0.5, True)]
        cb = discretize_confidence(dets, 2)
        assert cb.thresholds == (0.9, 0.5)
        assert cb.assign(0.95) == 0
        assert cb.assign(0.9) == 0
        assert cb.assign(0.7) == 1
        assert cb.assign(0.5) == 1
        assert cb.assign(0.4) is None

    def test_falses_do_not_move_thresholds(self):
        dets = [(0.9, True), (0.5, True)]
        noisy = dets + [(0.7, False)] * 20
        assert discretize_confidence(noisy, 2) == discretize_confidence(dets, 2)


class TestBuildBins:
    def test_binary_split_bounded(self):
        rng = random.Random(1)
        triples = [(rng.random(), rng.random() < 0.5, rng.randint(0, 1))
                   for _ in range(200)]
        if not any(t for _, t, _ in triples):
            triples[0] = (0.5, True, 0)
        grid = build_bins(triples, 10, 120)
        assert len(grid.bins) <= 20
        assert all(b.t or b.f for b in grid.bins)

    def test_constant_context_degenerates_to_confidence_bins(self):
        rng = random.Random(2)
        triples = [(rng.random(), rng.random() < 0.4, 0) for _ in range(120)]
        triples.append((0.5, True, 0))
        grid = build_bins(triples, 8, 60)
        base = discretize_confidence([(c, t) for c, t, _ in triples], 8)
        assert len(grid.bins) == len(base.thresholds)
        assert tuple(b.t for b in grid.bins) == base.positive_counts
        assert all(b.context_slot == 0 for b in grid.bins)

    def test_real_context_equal_positive_split(self):
        triples = []
        for i, conf in enumerate([0.9, 0.85, 0.8, 0.75]):
            triples.append((conf, True, float(i)))
        for i, conf in enumerate([0.4, 0.35, 0.3, 0.25]):
            triples.append((conf, True, float(i)))
        grid = build_bins(triples, 2, 8, context=2)
        assert len(grid.bins) == 4
        assert all(b.t == 2 for b in grid.bins)
        assert not grid.degraded

    def test_non_binary_context_rejected_in_binary_mode(self):
        with pytest.raises(ValueError, match="binary context"):
            build_bins([(0.9, True, 0.37)], 1, 1)

    def test_detections_below_last_threshold_excluded(self):
        triples = [(0.9, True, 0), (0.8, True, 0), (0.1, False, 0)]
        grid = build_bins(triples, 1, 2)
        assert sum(b.f for b in grid.bins) == 0


class TestHeuristicRank:
    def test_counterexample_scores(self):
        ranked = heuristic_rank(grid_from_counts(COUNTEREXAMPLE, COUNTEREXAMPLE_POS))
        assert [b.index for b in ranked.bins] == [0, 1, 2]
        assert ranked.scores[0] == pytest.approx(17.3125)
        assert ranked.scores[1] == pytest.approx(0.3884816, abs=1e-6)
        assert ranked.scores[2] == pytest.approx(0.3876404, abs=1e-6)

    def test_zero_f_bins_first(self):
        ranked = heuristic_rank(grid_from_counts([(1, 2), (1, 0), (1, 1)], 3))
        assert [b.index for b in ranked.bins] == [1, 2, 0]
        assert ranked.scores[0] == math.inf

    def test_single_bin_identity(self):
        ranked = heuristic_rank(grid_from_counts([(4, 2)], 4))
        assert [b.index for b in ranked.bins] == [0]

    def test_score_ties_break_by_index(self):
        ranked = heuristic_rank(grid_from_counts([(2, 4), (1, 2), (3, 6)], 6))
        assert [b.index for b in ranked.bins] == [0, 1, 2]


class TestApForms:
    def test_equal_bins_two_bin_case(self):
        grid = grid_from_counts([(1, 0), (1, 1)], 2)
        assert ap_equal_bins(rank_by_index(grid), 2) == pytest.approx(250 / 3)

    def test_equal_bins_three_bin_case(self):
        # (1/3)(2/2 + 4/6 + 6/14) * 100, cross-checked below against the
        # exact Riemann form and the ordering search.
        grid = grid_from_counts([(2, 0), (2, 2), (2, 6)], 6)
        expected = float(100 * Fraction(44, 63))
        assert ap_equal_bins(rank_by_index(grid), 3) == pytest.approx(expected)
        assert ap_general(rank_by_index(grid), 6) == pytest.approx(expected)
        _, best = permutation_oracle(grid)
        assert best == pytest.approx(expected)  # already optimally ordered

    def test_perfect_detector_scores_100(self):
        grid = grid_from_counts([(2, 0), (2, 0), (2, 0)], 6)
        assert ap_equal_bins(rank_by_index(grid), 3) == pytest.approx(100.0)
        assert ap_general(rank_by_index(grid), 6) == pytest.approx(100.0)

    def test_unequal_bins_rejected(self):
        grid = grid_from_counts([(2, 0), (3, 1)], 5)
        with pytest.raises(ValueError, match="ap_general"):
            ap_equal_bins(rank_by_index(grid), 2)

    def test_missed_objects_zero_tail(self):
        # Two bins of one positive each, but four objects exist.
        grid = grid_from_counts([(1, 0), (1, 0)], 4)
        assert ap_equal_bins(rank_by_index(grid), 4) == pytest.approx(50.0)
        assert ap_general(rank_by_index(grid), 4) == pytest.approx(50.0)

    def test_general_counterexample_values(self):
        grid = grid_from_counts(COUNTEREXAMPLE, COUNTEREXAMPLE_POS)
        assert ap_general(rank_by_index(grid), COUNTEREXAMPLE_POS) == pytest.approx(
            60.9314, abs=1e-3
        )
        reordered = grid_from_counts(
            [COUNTEREXAMPLE[0], COUNTEREXAMPLE[2], COUNTEREXAMPLE[1]],
            COUNTEREXAMPLE_POS,
        )
        assert ap_general(rank_by_index(reordered), COUNTEREXAMPLE_POS) == pytest.approx(
            62.5718, abs=1e-3
        )

    def test_general_single_perfect_bin(self):
        grid = grid_from_counts([(5, 0)], 5)
        assert ap_general(rank_by_index(grid), 5) == pytest.approx(100.0)

    def test_naive_examples(self):
        assert ap_naive([(0.9, True), (0.5, False)], 1) == pytest.approx(100.0)
        assert ap_naive([(0.9, False), (0.5, True)], 1) == pytest.approx(50.0)
        assert ap_naive(
            [(0.9, True), (0.8, True), (0.7, False), (0.6, True)], 3
        ) == pytest.approx(1100 / 12)

    def test_curve_invariants(self):
        grid = grid_from_counts(COUNTEREXAMPLE, COUNTEREXAMPLE_POS)
        curve = heuristic_rank(grid).curve(COUNTEREXAMPLE_POS)
        recalls = [r for r, _, _ in curve]
        assert recalls == sorted(recalls)
        assert all(dr >= 0 for _, _, dr in curve)
        assert sum(dr for _, _, dr in curve) == pytest.approx(1.0)
        assert all(0 <= p <= 1 for _, p, _ in curve)


def literal_best(counts, pos):
    """Reference maximization by explicit enumeration of all orderings."""
    bins = grid_from_counts(counts, pos).bins
    best = None
    best_order = None
    for perm in itertools.permutations(range(len(bins))):
        value = ap_general_exact([bins[i] for i in perm], pos)
        if best is None or value > best or (value == best and perm < best_order):
            best = value
            best_order = perm
    return best_order, best


def random_counts(rng, n, equal_t=False, max_t=5, max_f=12):
    if equal_t:
        t = rng.randint(1, max_t)
        return [(t, rng.randint(0, max_f)) for _ in range(n)]
    counts = []
    for _ in range(n):
        t, f = rng.randint(0, max_t), rng.randint(0, max_f)
        if t == 0 and f == 0:
            f = 1
        counts.append((t, f))
    if all(t == 0 for t, _ in counts):
        counts[0] = (1, counts[0][1])
    return counts


class TestPermutationOracle:
    def test_counterexample(self):
        ordering, best = permutation_oracle(
            grid_from_counts(COUNTEREXAMPLE, COUNTEREXAMPLE_POS)
        )
        assert ordering == (0, 2, 1)
        assert best == pytest.approx(62.5718, abs=1e-3)

    def test_equal_t_matches_heuristic(self):
        grid = grid_from_counts([(1, 3), (1, 0), (1, 1)], 3)
        ordering, best = permutation_oracle(grid)
        assert ordering == (1, 2, 0)  # increasing false counts
        ranked = heuristic_rank(grid)
        assert best == pytest.approx(ap_general(ranked, 3))

    def test_single_bin(self):
        grid = grid_from_counts([(3, 1)], 3)
        ordering, best = permutation_oracle(grid)
        assert ordering == (0,)
        assert best == pytest.approx(ap_general(rank_by_index(grid), 3))

    def test_bin_limit(self):
        grid = grid_from_counts([(1, 1)] * 11, 11)
        with pytest.raises(ValueError, match="oracle limited to 10 bins"):
            permutation_oracle(grid)

    def test_matches_literal_enumeration(self):
        rng = random.Random(99)
        for _ in range(60):
            n = rng.randint(2, 5)
            counts = random_counts(rng, n)
            pos = sum(t for t, _ in counts) + rng.randint(0, 4)
            ordering, _ = permutation_oracle(grid_from_counts(counts, pos))
            lit_order, lit_best = literal_best(counts, pos)
            bins = grid_from_counts(counts, pos).bins
            assert ap_general_exact([bins[i] for i in ordering], pos) == lit_best
            assert ordering == lit_order  # lexicographic tie-break agrees

    def test_six_bin_literal_spot_check(self):
        rng = random.Random(7)
        counts = random_counts(rng, 6)
        pos = sum(t for t, _ in counts) + 2
        ordering, _ = permutation_oracle(grid_from_counts(counts, pos))
        lit_order, lit_best = literal_best(counts, pos)
        bins = grid_from_counts(counts, pos).bins
        assert ap_general_exact([bins[i] for i in ordering], pos) == lit_best
        assert ordering == lit_order


class TestOrderingProperties:
    def test_oracle_dominates_heuristic(self):
        rng = random.Random(12345)
        strict = False
        for _ in range(250):
            counts = random_counts(rng, rng.randint(2, 7))
            pos = sum(t for t, _ in counts) + rng.randint(0, 4)
            grid = grid_from_counts(counts, pos)
            ranked = heuristic_rank(grid)
            ordering, _ = permutation_oracle(grid)
            h = ap_general_exact(ranked.bins, pos)
            o = ap_general_exact([grid.bins[i] for i in ordering], pos)
            assert o >= h
            strict = strict or o > h
        assert strict

    def test_equal_t_heuristic_is_optimal(self):
        rng = random.Random(54321)
        for _ in range(250):
            counts = random_counts(rng, rng.randint(2, 7), equal_t=True)
            pos = sum(t for t, _ in counts)
            grid = grid_from_counts(counts, pos)
            ranked = heuristic_rank(grid)
            ordering, _ = permutation_oracle(grid)
            assert ap_general_exact(ranked.bins, pos) == ap_general_exact(
                [grid.bins[i] for i in ordering], pos
            )

    def test_riemann_consistency_exact(self):
        rng = random.Random(777)
        for _ in range(100):
            n = rng.randint(1, 6)
            t = rng.randint(1, 4)
            counts = [(t, rng.randint(0, 9)) for _ in range(n)]
            m = n + rng.randint(0, 3)  # allow a missed-object tail
            pos = m * t
            grid = grid_from_counts(counts, pos)
            ranked = heuristic_rank(grid)
            exact = ap_general_exact(ranked.bins, pos)
            manual = 100 * Fraction(1, m) * sum(
                Fraction(
                    (i + 1) * t,
                    (i + 1) * t + sum(b.f for b in ranked.bins[: i + 1]),
                )
                for i in range(n)
            )
            assert exact == manual
            assert ap_equal_bins(ranked, m) == pytest.approx(float(exact), abs=1e-9)
            assert ap_general(ranked, pos) == pytest.approx(float(exact), abs=1e-9)

    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 10)),
                    min_size=1, max_size=7))
    @settings(max_examples=80, deadline=None)
    def test_ap_range(self, counts):
        counts = [(t, f if (t or f) else 1) for t, f in counts]
        total_t = sum(t for t, _ in counts)
        if total_t == 0:
            counts[0] = (1, counts[0][1])
            total_t = 1
        grid = grid_from_counts(counts, total_t + 2)
        value = ap_general(heuristic_rank(grid), grid.pos)
        assert 0.0 <= value <= 100.0


class TestBinNaiveEquivalence:
    def test_quick_equivalence(self):
        rng = random.Random(2024)
        for _ in range(25):
            n_pos = rng.randint(2, 15)
            n_neg = rng.randint(0, 25)
            confs = rng.sample(range(1, 100000), n_pos + n_neg)
            dets = [(c / 100000, i < n_pos) for i, c in enumerate(confs)]
            rng.shuffle(dets)
            pos = n_pos + rng.randint(0, 3)
            naive = ap_naive(dets, pos)
            grid = build_bins([(c, t, 0) for c, t in dets], pos, pos)
            binned = ap_equal_bins(rank_by_index(grid), pos)
            assert abs(naive - binned) < 1e-9
