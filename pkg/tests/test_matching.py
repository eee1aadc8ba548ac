import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from denseval.exceptions import GeometryError, InputError
from denseval.matching import (ComputeProfile, MatchOutcome,
                               average_precision_50, dataset_metrics, efficiency_metrics,
                               greedy_match, match_instances, match_scene, mean_image_f1,
                               metrics_from_counts, prepare_scene, prf)
from denseval.structures import AnnotationSet, InstanceMask, Prediction, PredictionSet

from helpers import greedy_reference, max_matching_size


def _rect(x0, x1, y0=0, y1=1, w=100, h=10):
    full = np.zeros((h, w), bool)
    full[y0:y1, x0:x1] = True
    return InstanceMask.from_full(full)


def _scene(preds, gts, w=100, h=10):
    return (PredictionSet("img", w, h, [Prediction(m, s) for m, s in preds]),
            AnnotationSet("img", w, h, gts))


def test_identity_match():
    g = _rect(0, 10)
    out = match_instances(*_scene([(g, 0.5)], [g]), tau=0.9)
    assert (out.tp, out.fp, out.fn) == (1, 0, 0)


def test_threshold_boundary():
    # 100 px ground truth, 14 px of it predicted: IoU 0.14.
    g = _rect(0, 100)
    p = _rect(0, 14)
    preds, gts = _scene([(p, 0.9)], [g])
    assert prepare_scene(preds, gts).iou[0, 0] == pytest.approx(0.14)
    out = match_instances(preds, gts, 0.15)
    assert (out.tp, out.fp, out.fn) == (0, 1, 1)
    assert match_instances(preds, gts, 0.14).tp == 1


def test_duplicate_prediction_is_fp():
    g = _rect(0, 10)
    p = _rect(0, 9)
    out = match_instances(*_scene([(p, 0.8), (p, 0.9)], [g]), 0.15)
    assert out.matches == [(1, 0, pytest.approx(0.9))]
    assert out.fp_indices == [0]


def test_best_iou_then_lowest_gt_index():
    g0, g1 = _rect(0, 10), _rect(5, 15)
    p = _rect(5, 14)                 # IoU 5/14 with g0, 9/10 with g1
    out = match_instances(*_scene([(p, 0.5)], [g0, g1]), 0.1)
    assert out.matches[0][1] == 1
    twin = _rect(0, 10)
    out = match_instances(*_scene([(_rect(0, 10), 0.5)], [twin, _rect(0, 10)]), 0.1)
    assert out.matches[0][1] == 0 and out.fn_indices == [1]


def test_equal_confidence_lower_index_first():
    g = _rect(0, 10)
    out = match_instances(*_scene([(_rect(0, 6), 0.5), (_rect(0, 9), 0.5)], [g]), 0.1)
    assert out.matches[0][0] == 0


def test_lattice_mismatch():
    p = PredictionSet("a", 5, 5, [])
    g = AnnotationSet("a", 6, 5, [])
    with pytest.raises(GeometryError):
        match_instances(p, g, 0.5)


def test_tau_range():
    with pytest.raises(InputError):
        match_instances(*_scene([], []), 0.0)


def test_empty_prediction_mask_dropped():
    empty = InstanceMask(100, 10, 0, 0, np.zeros((0, 0), bool))
    preds, gts = _scene([(empty, 0.9)], [_rect(0, 5)])
    s = prepare_scene(preds, gts)
    assert s.dropped_predictions == 1
    out = match_scene(s, 0.5)
    assert (out.tp, out.fp, out.fn) == (0, 0, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]), min_size=n, max_size=n),
             max_size=8),
    st.floats(0.05, 1.0))), st.data())
def test_greedy_against_reference(args, data):
    rows, tau = args
    n_g = len(rows[0]) if rows else 0
    iou = np.array(rows, dtype=float).reshape(len(rows), n_g)
    scores = data.draw(st.lists(st.sampled_from([0.1, 0.5, 0.9]), min_size=len(rows),
                                max_size=len(rows)))
    matches, fps, fns = greedy_match(iou, np.array(scores), tau)
    ref = greedy_reference(iou.tolist(), scores, tau)
    assert sorted((i, j) for i, j, _ in matches) == sorted(ref)
    assert len(matches) + len(fps) == len(rows)
    assert len(matches) + len(fns) == n_g
    assert len(matches) <= max_matching_size((iou >= tau).tolist())


# --- metrics -------------------------------------------------------------------

def _outcome(tp, fp, fn, tau=0.15):
    return MatchOutcome("x", tau, [(i, i, 1.0) for i in range(tp)],
                        list(range(tp, tp + fp)), list(range(tp, tp + fn)))


def test_published_counts():
    r = dataset_metrics([_outcome(2577, 2074, 1393)])
    assert abs(100 * r.precision - 55.4) <= 0.05
    assert abs(100 * r.recall - 64.9) <= 0.05
    assert abs(100 * r.f1 - 59.8) <= 0.05
    d = r.to_dict()
    assert (d["precision"], d["recall"], d["f1"]) == (55.4, 64.9, 59.8)
    assert (d["tp_rate"], d["fp_rate"], d["fn_rate"]) == (64.9, 52.2, 35.1)


def test_symmetric_counts():
    r = dataset_metrics([_outcome(1, 1, 1)])
    assert r.precision == r.recall == r.f1 == 0.5


@pytest.mark.parametrize("counts,expected", [
    ((0, 0, 0), (1.0, 1.0, 1.0)),
    ((0, 0, 3), (1.0, 0.0, 0.0)),
    ((0, 3, 0), (0.0, 1.0, 0.0)),
])
def test_degenerate_conventions(counts, expected):
    assert prf(*counts) == expected


def test_mixed_tau_rejected():
    with pytest.raises(InputError):
        dataset_metrics([_outcome(1, 0, 0, 0.1), _outcome(1, 0, 0, 0.2)])


def test_mean_image_f1_examples():
    assert mean_image_f1([_outcome(1, 0, 0), _outcome(0, 1, 1)]) == 0.5
    assert mean_image_f1([_outcome(1, 0, 0), _outcome(1, 1, 1)]) == 0.75
    single = _outcome(3, 2, 1)
    assert mean_image_f1([single]) == dataset_metrics([single]).f1
    with pytest.raises(InputError):
        mean_image_f1([])


def test_mean_image_f1_empty_policies():
    outs = [_outcome(1, 0, 0), _outcome(0, 0, 0)]
    assert mean_image_f1(outs, "perfect") == 1.0
    assert mean_image_f1(outs, "zero") == 0.5
    assert mean_image_f1(outs, "exclude") == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_harmonic_mean_identity(tp, fp, fn):
    p, r, f = prf(tp, fp, fn)
    assert 0 <= p <= 1 and 0 <= r <= 1
    if p + r > 0:
        assert f == pytest.approx(2 * p * r / (p + r))
    rep = metrics_from_counts(tp, fp, fn)
    assert rep.tp + rep.fn == tp + fn and rep.tp + rep.fp == tp + fp


# --- AP ------------------------------------------------------------------------

def test_ap_single_correct():
    g = _rect(0, 10)
    assert average_precision_50(*[[x] for x in _scene([(g, 0.9)], [g])]) == 1.0


def test_ap_zero():
    preds, gts = _scene([(_rect(0, 4), 0.9)], [_rect(0, 10)])
    assert average_precision_50([preds], [gts]) == 0.0


def test_ap_hand_integration():
    g0, g1 = _rect(0, 10), _rect(50, 60)
    preds, gts = _scene([(g0, 0.9), (_rect(80, 90), 0.8)], [g0, g1])
    assert average_precision_50([preds], [gts]) == pytest.approx(0.5)


def test_ap_envelope():
    # Ranked TP, FP, TP over 2 GTs: precision 1, 1/2, 2/3; envelope lifts the 0.5 step.
    g0, g1 = _rect(0, 10), _rect(50, 60)
    preds, gts = _scene([(g0, 0.9), (_rect(80, 90), 0.8), (g1, 0.7)], [g0, g1])
    assert average_precision_50([preds], [gts]) == pytest.approx(0.5 * 1 + 0.5 * 2 / 3)


def test_ap_zero_gt_raises():
    preds, gts = _scene([(_rect(0, 4), 0.9)], [])
    with pytest.raises(InputError):
        average_precision_50([preds], [gts])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 90), st.integers(2, 10)), min_size=1, max_size=6),
       st.lists(st.tuples(st.integers(0, 90), st.integers(2, 10)), min_size=1, max_size=6),
       st.randoms(use_true_random=False))
def test_ap_permutation_invariant(gspec, pspec, rnd):
    gts = [_rect(x, x + w) for x, w in gspec]
    preds = [(_rect(x, x + w), (k + 1) / 10) for k, (x, w) in enumerate(pspec)]
    a = average_precision_50(*[[x] for x in _scene(preds, gts)])
    shuffled = preds[:]
    rnd.shuffle(shuffled)
    b = average_precision_50(*[[x] for x in _scene(shuffled, gts)])
    assert a == pytest.approx(b)
    assert 0.0 <= a <= 1.0


# --- efficiency ---------------------------------------------------------------

def test_efficiency_examples():
    assert efficiency_metrics(68.9, ComputeProfile("n", gflops=10.4)).f1_per_gflop == pytest.approx(6.625)
    assert efficiency_metrics(0.0, ComputeProfile("n", gflops=3.0)).f1_per_gflop == 0.0
    e = efficiency_metrics(50.0, ComputeProfile("n", times_ms=[40, 50]))
    assert (e.total_ms, e.mean_ms, e.f1_per_gflop) == (90, 45, None)
    e = efficiency_metrics(50.0, ComputeProfile("n", gflops=1.0))
    assert e.total_ms is None and e.mean_ms is None


def test_efficiency_from_report():
    rep = metrics_from_counts(1, 1, 1)
    assert efficiency_metrics(rep, ComputeProfile("n", gflops=2.0)).f1_per_gflop == pytest.approx(25.0)


@pytest.mark.parametrize("gflops", [0.0, -1.0])
def test_efficiency_rejects_nonpositive_compute(gflops):
    with pytest.raises(InputError):
        efficiency_metrics(50.0, ComputeProfile("n", gflops=gflops))


def test_profile_load(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"model": "m", "params": 10, "gflops": 2.5, "times_ms": [1, 2],
                             "gpu_gb": 2.0}))
    prof = ComputeProfile.load(p)
    assert (prof.parameter_count, prof.gflops, prof.times_ms, prof.gpu_gb) == (10, 2.5, [1, 2], 2.0)
    p.write_text(json.dumps({"gflops": 2}))
    with pytest.raises(InputError):
        ComputeProfile.load(p)
