import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbound.dataset import group_objects_by_image
from ctxbound.matching import (
    ErrorType,
    EvaluatedDetection,
    MatchConfig,
    classify_error,
    evaluate_bundle,
    iou,
    match_detections,
)

from conftest import box, bundle_of, det, evaluated, gt


class TestIoU:
    def test_identical_boxes(self):
        b = box(3, 4, 10, 20)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 5, 5)) == 0.0

    def test_half_shifted(self):
        # intersection 50, union 150
        assert math.isclose(iou(box(0, 0, 10, 10), box(5, 0, 10, 10)), 1 / 3)

    @given(
        st.tuples(*[st.integers(0, 50) for _ in range(2)],
                  *[st.integers(1, 30) for _ in range(2)]),
        st.tuples(*[st.integers(0, 50) for _ in range(2)],
                  *[st.integers(1, 30) for _ in range(2)]),
    )
    def test_symmetric_and_bounded(self, a, b):
        ba, bb = box(*a), box(*b)
        v = iou(ba, bb)
        assert v == iou(bb, ba)
        assert 0.0 <= v <= 1.0


class TestMatchDetections:
    def test_single_pair_above_threshold(self):
        dets = [det(1, "cat", box(0, 0, 10, 10), 0.9)]
        objs = [gt(1, 1, "cat", box(0, 2, 10, 10))]  # IoU 0.667
        out = match_detections(dets, objs, MatchConfig(0.5))
        assert out[0].is_true and out[0].matched_object == 1

    def test_object_consumed_once(self):
        target = box(0, 0, 10, 10)
        dets = [
            det(1, "cat", box(0, 1, 10, 10), 0.9, 0),
            det(1, "cat", box(1, 0, 10, 10), 0.8, 1),
        ]
        objs = [gt(1, 1, "cat", target)]
        out = match_detections(dets, objs, MatchConfig(0.5))
        assert out[0].is_true
        assert not out[1].is_true
        assert out[1].error_type is ErrorType.LOCALIZATION  # duplicate of matched

    def test_below_threshold_false(self):
        dets = [det(1, "cat", box(0, 0, 10, 10), 0.9)]
        objs = [gt(1, 1, "cat", box(0, 7, 10, 10))]  # IoU 3/17 < 0.5
        out = match_detections(dets, objs, MatchConfig(0.5))
        assert not out[0].is_true

    def test_confidence_tie_breaks_by_input_order(self):
        target = box(0, 0, 10, 10)
        dets = [
            det(1, "cat", box(0, 1, 10, 10), 0.8, 0),
            det(1, "cat", box(0, 0, 10, 10), 0.8, 1),
        ]
        objs = [gt(1, 1, "cat", target)]
        out = match_detections(dets, objs, MatchConfig(0.5))
        assert out[0].is_true and not out[1].is_true

    def test_status_and_error_type_invariant(self):
        with pytest.raises(ValueError):
            EvaluatedDetection(det(), True, ErrorType.BACKGROUND, 1, 0.9, 1)
        with pytest.raises(ValueError):
            EvaluatedDetection(det(), False, None, None, 0.0, None)


class TestClassifyError:
    def make_false(self, b, category="cat"):
        return evaluated(0.5, False, ErrorType.BACKGROUND, 1, category, b)

    def test_same_label_overlap_is_localization(self):
        ev = self.make_false(box(0, 4, 10, 10))  # IoU 0.43 with object below
        objs = [gt(1, 1, "cat", box(0, 0, 10, 10))]
        assert classify_error(ev, objs) is ErrorType.LOCALIZATION

    def test_different_label_overlap_is_class_confusion(self):
        ev = self.make_false(box(0, 4, 10, 10))
        objs = [gt(1, 1, "dog", box(0, 0, 10, 10))]
        assert classify_error(ev, objs) is ErrorType.CLASS_CONFUSION

    def test_tiny_overlap_is_background(self):
        ev = self.make_false(box(0, 9, 10, 10))  # IoU 1/19 ~ 0.05
        objs = [gt(1, 1, "cat", box(0, 0, 10, 10))]
        assert classify_error(ev, objs) is ErrorType.BACKGROUND

    def test_no_objects_is_background(self):
        assert classify_error(self.make_false(box(0, 0, 5, 5)), []) is ErrorType.BACKGROUND

    def test_most_overlapping_object_decides_label(self):
        # Closer dog outranks farther cat, so the label mismatch wins.
        ev = self.make_false(box(0, 2, 10, 10))
        objs = [
            gt(1, 1, "dog", box(0, 0, 10, 10)),   # IoU 0.67
            gt(2, 1, "cat", box(0, 8, 10, 10)),   # IoU 0.11
        ]
        assert classify_error(ev, objs) is ErrorType.CLASS_CONFUSION


scene_boxes = st.lists(
    st.tuples(st.integers(0, 80), st.integers(0, 80),
              st.integers(4, 30), st.integers(4, 30)),
    min_size=1, max_size=8,
)


@st.composite
def scenes(draw):
    objs = [
        gt(i + 1, 1, draw(st.sampled_from(["a", "b"])), box(*spec))
        for i, spec in enumerate(draw(scene_boxes))
    ]
    dets = [
        det(1, draw(st.sampled_from(["a", "b"])), box(*spec),
            draw(st.floats(0.01, 0.99)), i)
        for i, spec in enumerate(draw(scene_boxes))
    ]
    return objs, dets


class TestMatchingProperties:
    @given(scenes())
    @settings(max_examples=60, deadline=None)
    def test_partition(self, scene):
        objs, dets = scene
        by_image = group_objects_by_image(objs)
        for category in ("a", "b"):
            out = match_detections(
                [d for d in dets if d.category == category],
                [o for o in objs if o.category == category],
                MatchConfig(0.5), by_image,
            )
            for ev in out:
                assert ev.is_true == (ev.error_type is None)
                assert ev.is_true == (ev.matched_object is not None)
                assert 0.0 <= ev.max_overlap <= 1.0

    @given(scenes())
    @settings(max_examples=60, deadline=None)
    def test_true_count_bounded(self, scene):
        objs, dets = scene
        for category in ("a", "b"):
            cat_dets = [d for d in dets if d.category == category]
            cat_objs = [o for o in objs if o.category == category]
            out = match_detections(cat_dets, cat_objs, MatchConfig(0.5))
            trues = sum(ev.is_true for ev in out)
            assert trues <= min(len(cat_dets), len(cat_objs))

    @given(scenes(), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
    @settings(max_examples=60, deadline=None)
    def test_threshold_monotonicity(self, scene, t1, t2):
        objs, dets = scene
        lo, hi = sorted((t1, t2))
        for category in ("a", "b"):
            cat_dets = [d for d in dets if d.category == category]
            cat_objs = [o for o in objs if o.category == category]
            at_lo = sum(ev.is_true for ev in
                        match_detections(cat_dets, cat_objs, MatchConfig(lo)))
            at_hi = sum(ev.is_true for ev in
                        match_detections(cat_dets, cat_objs, MatchConfig(hi)))
            assert at_hi <= at_lo


def test_evaluate_bundle_orders_by_index(two_image_bundle):
    out = evaluate_bundle(two_image_bundle)
    assert [ev.detection.index for ev in out] == [0, 1]
    assert out[0].is_true
    assert not out[1].is_true and out[1].error_type is ErrorType.BACKGROUND
