import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmforge.annotations import BBox, Detection, GroundTruthAnnotation, read_tags_file
from palmforge.errors import EmptyEvaluationError
from palmforge.fixtures import data_path
from palmforge.metrics import (
    average_precision,
    count_report,
    evaluate,
    group_by_tag,
    iou,
    map_at,
    match,
)
from palmforge import annotations


def det(cx, cy, w, h, conf, class_id=0):
    return Detection(class_id, BBox(cx, cy, w, h), conf)


def gt(cx, cy, w, h, class_id=0):
    return GroundTruthAnnotation(class_id, BBox(cx, cy, w, h))


# --- independent oracles --------------------------------------------------


def iou_raster_oracle(a, b, n=400):
    """Count unit-square grid cells whose centers fall in each box."""
    centers = (np.arange(n) + 0.5) / n
    xs = centers[None, :]
    ys = centers[:, None]

    def mask(box):
        x0, y0, x1, y1 = box.corners()
        return (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)

    ma, mb = mask(a), mask(b)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def ap_quadrature_oracle(flags, n_gt):
    """Midpoint quadrature of the right-max precision envelope over recall.

    Measured recalls are multiples of 1/n_gt, so the envelope is constant on
    each interval ((k)/n_gt, (k+1)/n_gt] and midpoint evaluation is exact.
    """
    tp = fp = 0
    points = []
    for is_tp in flags:
        tp, fp = (tp + 1, fp) if is_tp else (tp, fp + 1)
        points.append((tp / n_gt, tp / (tp + fp)))

    def envelope_at(r):
        return max((p for rec, p in points if rec >= r), default=0.0)

    return sum(envelope_at((k + 0.5) / n_gt) for k in range(n_gt)) / n_gt


@st.composite
def boxes(draw, min_side=0.05):
    w = draw(st.floats(min_side, 0.9))
    h = draw(st.floats(min_side, 0.9))
    cx = draw(st.floats(w / 2, 1.0 - w / 2))
    cy = draw(st.floats(h / 2, 1.0 - h / 2))
    return BBox(cx, cy, w, h)


# --- IoU -------------------------------------------------------------------


def test_iou_identity_is_exactly_one():
    b = BBox(0.3, 0.4, 0.2, 0.2)
    assert iou(b, b) == 1.0


def test_iou_disjoint_is_zero():
    assert iou(BBox(0.2, 0.2, 0.2, 0.2), BBox(0.8, 0.8, 0.2, 0.2)) == 0.0


def test_iou_overlapping_unit_squares_is_one_seventh():
    # corner form (0,0,2,2) vs (1,1,3,3), scaled into the unit square
    a = BBox.from_corners(0.0, 0.0, 0.5, 0.5)
    b = BBox.from_corners(0.25, 0.25, 0.75, 0.75)
    assert iou(a, b) == pytest.approx(1.0 / 7.0, abs=1e-12)
    assert abs(iou(a, b) - iou_raster_oracle(a, b)) <= 0.02


@given(boxes(), boxes())
@settings(max_examples=100, deadline=None)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes(min_side=0.1), boxes(min_side=0.1))
@settings(max_examples=60, deadline=None)
def test_iou_matches_raster_oracle(a, b):
    assert abs(iou(a, b) - iou_raster_oracle(a, b)) <= 0.02


# --- matching ---------------------------------------------------------------


def test_perfect_detector_matches_everything():
    truths = [gt(0.2, 0.2, 0.1, 0.1), gt(0.6, 0.6, 0.1, 0.1)]
    dets = [det(0.2, 0.2, 0.1, 0.1, 1.0), det(0.6, 0.6, 0.1, 0.1, 1.0)]
    outcome = match(dets, truths, 0.5)
    assert outcome.flags == [True, True]
    assert outcome.fn == 0


def test_zero_detections_count_all_truths_as_fn():
    outcome = match([], [gt(0.2, 0.2, 0.1, 0.1)] * 3, 0.5)
    assert outcome.flags == [] and outcome.fn == 3


def brute_force_best_matching(dets, truths, tau):
    """Maximum-TP assignment by exhaustive enumeration (oracle)."""
    best = 0
    indices = list(range(len(truths))) + [None] * len(dets)
    for assignment in itertools.permutations(indices, len(dets)):
        tps = 0
        for d, j in zip(dets, assignment):
            if j is not None and iou(d.box, truths[j].box) >= tau:
                tps += 1
        best = max(best, tps)
    return best


def test_two_detections_one_truth_higher_confidence_wins():
    truth = [gt(0.5, 0.5, 0.2, 0.2)]
    dets = [det(0.5, 0.5, 0.2, 0.2, 0.8), det(0.51, 0.5, 0.2, 0.2, 0.9)]
    outcome = match(dets, truth, 0.5)
    # ranked order: the 0.9 detection first, and it takes the truth
    assert outcome.order == [1, 0]
    assert outcome.flags == [True, False]
    assert brute_force_best_matching(dets, truth, 0.5) == sum(outcome.flags)


def test_duplicate_detections_yield_one_tp():
    truth = [gt(0.5, 0.5, 0.2, 0.2)]
    dets = [det(0.5, 0.5, 0.2, 0.2, c) for c in (0.9, 0.8, 0.7)]
    outcome = match(dets, truth, 0.5)
    assert outcome.flags == [True, False, False]


def test_confidence_ties_break_on_input_order():
    truth = [gt(0.5, 0.5, 0.2, 0.2)]
    dets = [det(0.5, 0.5, 0.2, 0.2, 0.7), det(0.5, 0.5, 0.2, 0.2, 0.7)]
    outcome = match(dets, truth, 0.5)
    assert outcome.order == [0, 1]
    assert outcome.flags == [True, False]


def test_iou_ties_take_lowest_truth_index():
    truths = [gt(0.4, 0.5, 0.2, 0.2), gt(0.6, 0.5, 0.2, 0.2)]
    dets = [det(0.5, 0.5, 0.2, 0.2, 0.9)]  # IoU exactly 1/3 with both truths
    outcome = match(dets, truths, 0.3)
    assert outcome.matched_gt == [0]


@given(st.integers(0, 2 ** 32))
@settings(max_examples=50, deadline=None)
def test_match_conservation_laws(seed):
    rng = np.random.default_rng(seed)
    truths = [gt(float(c), 0.5, 0.15, 0.15) for c in rng.uniform(0.1, 0.9, rng.integers(0, 5))]
    dets = [det(float(c), 0.5, 0.15, 0.15, float(p))
            for c, p in zip(rng.uniform(0.1, 0.9, rng.integers(0, 6)),
                            rng.uniform(0.0, 1.0, 6))]
    outcome = match(dets, truths, 0.5)
    tp = sum(outcome.flags)
    assert tp + (len(outcome.flags) - tp) == len(dets)
    assert tp + outcome.fn == len(truths)
    matched = [m for m in outcome.matched_gt if m is not None]
    assert len(matched) == len(set(matched))  # one detection per truth


# --- average precision ------------------------------------------------------


def test_ap_perfect_detector_is_exactly_one():
    ap, _ = average_precision([True] * 7, 7)
    assert ap == 1.0


def test_ap_all_false_positives_is_zero():
    ap, _ = average_precision([False] * 5, 3)
    assert ap == 0.0


def test_ap_hand_traced_case():
    # ranked [TP, FP, TP] with two truths: points (0.5, 1.0), (0.5, 0.5),
    # (1.0, 2/3); all-point area = 0.5 * 1.0 + 0.5 * (2/3) = 5/6
    ap, curve = average_precision([True, False, True], 2)
    assert ap == pytest.approx(5.0 / 6.0, abs=1e-12)
    assert curve.precisions == [1.0, 0.5, pytest.approx(2.0 / 3.0)]
    assert curve.recalls == [0.5, 0.5, 1.0]


def test_ap_11point_hand_traced_case():
    ap, _ = average_precision([True, False, True], 2, interpolation="11point")
    assert ap == pytest.approx(28.0 / 33.0, abs=1e-12)


@given(st.lists(st.booleans(), max_size=12), st.integers(1, 6))
@settings(max_examples=200, deadline=None)
def test_ap_matches_quadrature_oracle(flags, n_gt):
    if sum(flags) > n_gt:
        flags = flags[:]
        while sum(flags) > n_gt:
            flags.remove(True)
    ap, curve = average_precision(flags, n_gt)
    assert abs(ap - ap_quadrature_oracle(flags, n_gt)) <= 1e-9
    assert all(b >= a for a, b in zip(curve.recalls, curve.recalls[1:]))


def test_pr_curve_csv_export():
    _, curve = average_precision([True, False], 2, confidences=[0.9, 0.4])
    text = curve.to_csv()
    lines = text.splitlines()
    assert lines[0] == "rank,conf,precision,recall"
    assert len(lines) == 3
    assert lines[1].startswith("1,0.900000,")


# --- evaluate / mAP ---------------------------------------------------------


def two_class_fixture():
    gt_by_image = {
        "img_a": [gt(0.2, 0.2, 0.1, 0.1, 0), gt(0.6, 0.6, 0.1, 0.1, 1)],
        "img_b": [gt(0.4, 0.4, 0.1, 0.1, 0)],
    }
    det_by_image = {
        "img_a": [det(0.2, 0.2, 0.1, 0.1, 0.9, 0), det(0.6, 0.6, 0.1, 0.1, 0.8, 1)],
        "img_b": [det(0.4, 0.4, 0.1, 0.1, 0.7, 0), det(0.9, 0.9, 0.1, 0.1, 0.65, 0)],
    }
    return gt_by_image, det_by_image


def test_evaluate_two_classes():
    gt_by_image, det_by_image = two_class_fixture()
    report = evaluate(gt_by_image, det_by_image, class_names=["palm", "okra"])
    assert report.class_stats["palm"]["n_gt"] == 2
    assert report.class_stats["palm"]["ap"] == 1.0  # FP ranks after both TPs
    assert report.class_stats["okra"]["ap"] == 1.0
    assert report.map == 1.0
    assert report.class_stats["palm"]["fp"] == 1


def test_map_is_mean_of_class_aps():
    stats = {
        "a": {"ap": 1.0, "evaluable": True, "flagged": False},
        "b": {"ap": 0.5, "evaluable": True, "flagged": False},
    }
    report = map_at(stats, 0.5)
    assert report.map == pytest.approx(0.75, abs=1e-12)
    single = map_at({"a": stats["a"]}, 0.5)
    assert single.map == 1.0


def test_class_without_ground_truth_is_excluded_and_flagged():
    gt_by_image = {"img": [gt(0.2, 0.2, 0.1, 0.1, 0)]}
    det_by_image = {"img": [det(0.2, 0.2, 0.1, 0.1, 0.9, 0),
                            det(0.6, 0.6, 0.1, 0.1, 0.9, 1)]}
    report = evaluate(gt_by_image, det_by_image, class_names=["palm", "ghost"])
    assert report.excluded == ["ghost"]
    assert report.class_stats["ghost"]["ap"] is None
    assert report.map == 1.0  # mean over the evaluable class only


def test_zero_evaluable_classes_raises_unless_allowed():
    det_by_image = {"img": [det(0.2, 0.2, 0.1, 0.1, 0.9, 0)]}
    with pytest.raises(EmptyEvaluationError):
        evaluate({"img": []}, det_by_image)
    report = evaluate({"img": []}, det_by_image, allow_empty=True)
    assert report.map is None


def test_matching_never_crosses_images():
    gt_by_image = {"img_a": [gt(0.5, 0.5, 0.2, 0.2)], "img_b": []}
    det_by_image = {"img_a": [], "img_b": [det(0.5, 0.5, 0.2, 0.2, 0.9)]}
    report = evaluate(gt_by_image, det_by_image, allow_empty=True)
    stats = report.class_stats["class_0"]
    assert stats["tp"] == 0 and stats["fp"] == 1 and stats["fn"] == 1
    assert stats["ap"] == 0.0


def test_raising_iou_threshold_never_raises_ap():
    gt_by_image = {"img": [gt(0.3, 0.3, 0.2, 0.2), gt(0.7, 0.7, 0.2, 0.2)]}
    det_by_image = {"img": [det(0.33, 0.3, 0.2, 0.2, 0.9),
                            det(0.75, 0.72, 0.2, 0.2, 0.8)]}
    last = 1.1
    for tau in (0.1, 0.3, 0.5, 0.7, 0.9):
        report = evaluate(gt_by_image, det_by_image, iou_threshold=tau)
        assert report.map <= last + 1e-12
        last = report.map


# --- counting ----------------------------------------------------------------


def test_count_thresholding():
    dets = {"img": [det(0.2, 0.2, 0.1, 0.1, c) for c in (0.9, 0.65, 0.5)]}
    assert count_report(dets, 0.6)["total_predicted"] == 2
    assert count_report(dets, 0.0)["total_predicted"] == 3
    assert count_report(dets, 1.0)["total_predicted"] == 0


def test_count_monotone_in_threshold():
    rng = np.random.default_rng(8)
    dets = {f"i{k}": [det(0.5, 0.5, 0.1, 0.1, float(c))
                      for c in rng.uniform(0, 1, 10)] for k in range(4)}
    previous = None
    for theta in (0.0, 0.3, 0.6, 0.71, 0.9, 1.0):
        total = count_report(dets, theta)["total_predicted"]
        if previous is not None:
            assert total <= previous
        previous = total


def test_count_pairs_predictions_with_labels():
    dets = {"img": [det(0.2, 0.2, 0.1, 0.1, 0.95), det(0.6, 0.6, 0.1, 0.1, 0.7)]}
    gts = {"img": [gt(0.2, 0.2, 0.1, 0.1)]}
    report = count_report(dets, 0.6, gts, class_names=["palm"])
    assert report["per_class"]["palm"] == {"predicted": 2, "labeled": 1, "delta": 1}


# --- grouped evaluation -------------------------------------------------------


def test_group_by_altitude_on_packaged_testset():
    gt_by_image = annotations.read_annotations_dir(data_path("testset", "gt"))
    det_by_image = annotations.read_detections_dir(data_path("testset", "det"))
    tags = read_tags_file(data_path("testset", "tags.json"))
    groups = group_by_tag(gt_by_image, det_by_image, tags, "altitude",
                          class_names=["palm"])
    assert sorted(groups) == ["25m", "45m", "70m"]
    sizes = {k: g.n_images for k, g in groups.items()}
    assert sizes == {"25m": 38, "45m": 12, "70m": 3}
    n_gt = {k: g.class_stats["palm"]["n_gt"] for k, g in groups.items()}
    assert n_gt == {"25m": 187, "45m": 126, "70m": 66}


def test_single_uniform_tag_equals_ungrouped():
    gt_by_image, det_by_image = two_class_fixture()
    tags = {i: {"altitude": "25m"} for i in gt_by_image}
    groups = group_by_tag(gt_by_image, det_by_image, tags, "altitude")
    assert list(groups) == ["25m"]
    whole = evaluate(gt_by_image, det_by_image)
    assert groups["25m"].map == whole.map
    assert groups["25m"].class_stats == whole.class_stats


def test_group_with_zero_ground_truth_is_flagged_not_fatal():
    gt_by_image = {"a": [gt(0.5, 0.5, 0.1, 0.1)], "b": []}
    det_by_image = {"a": [], "b": [det(0.5, 0.5, 0.1, 0.1, 0.9)]}
    tags = {"a": {"altitude": "25m"}, "b": {"altitude": "70m"}}
    groups = group_by_tag(gt_by_image, det_by_image, tags, "altitude")
    assert groups["70m"].map is None
    assert groups["70m"].excluded == ["class_0"]
    assert groups["25m"].map == 0.0


def test_untagged_images_form_their_own_group():
    gt_by_image, det_by_image = two_class_fixture()
    tags = {"img_a": {"altitude": "25m"}}
    groups = group_by_tag(gt_by_image, det_by_image, tags, "altitude")
    assert sorted(groups) == ["25m", "untagged"]
