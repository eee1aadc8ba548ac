import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from denseval.exceptions import InputError
from denseval.matching import MetricsReport, dataset_metrics, match_instances, prepare_scene
from denseval.structures import AnnotationSet, InstanceMask, Prediction, PredictionSet
from denseval.sweeps import (DEFAULT_CONFIDENCE_GRID, DEFAULT_IOU_GRID, SweepCurve,
                             confidence_sweep, degradation_stats, iou_sweep, select_threshold)

from helpers import max_matching_size


def _rect(x0, x1, w=200, h=2):
    full = np.zeros((h, w), bool)
    full[:, x0:x1] = True
    return InstanceMask.from_full(full)


def _curve(f1s, ts):
    return SweepCurve("iou_threshold", [
        (t, MetricsReport(0, 0, 0, 0.0, 0.0, f, f, t, 0.0)) for t, f in zip(ts, f1s)])


def test_default_grids():
    assert DEFAULT_IOU_GRID == (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
    assert DEFAULT_CONFIDENCE_GRID == (0.15, 0.2, 0.25, 0.3, 0.35, 0.4)


def test_perfect_predictions_flat():
    gts = [_rect(0, 10), _rect(20, 30)]
    preds = PredictionSet("a", 200, 2, [Prediction(g, 0.9) for g in gts])
    curve = iou_sweep([preds], [AnnotationSet("a", 200, 2, gts)])
    assert curve.f1 == [1.0] * 10
    assert degradation_stats(curve, 0.1, 0.5) == 0.0


def _step_fixture():
    # Every prediction covers its 10 px GT plus 40 px outside it: IoU exactly 0.2.
    gts = [_rect(50 * k, 50 * k + 10, w=500) for k in range(5)]
    preds = [Prediction(_rect(50 * k, 50 * k + 50, w=500), 0.9) for k in range(5)]
    return [PredictionSet("a", 500, 2, preds)], [AnnotationSet("a", 500, 2, gts)]


def test_step_construction():
    preds, gts = _step_fixture()
    assert prepare_scene(preds[0], gts[0]).iou.max() == pytest.approx(0.2)
    curve = iou_sweep(preds, gts)
    for t, r in curve.points:
        assert r.f1 == (1.0 if t <= 0.2 else 0.0)
    assert degradation_stats(curve, 0.2, 0.25) == 100.0


def test_confidence_constant_region():
    gts = [_rect(0, 10)]
    preds = [PredictionSet("a", 200, 2, [Prediction(_rect(0, 10), 0.9), Prediction(_rect(50, 60), 0.9)])]
    curve = confidence_sweep(preds, [AnnotationSet("a", 200, 2, gts)], [0.1, 0.5, 0.9])
    assert {(r.tp, r.fp, r.fn, r.f1) for _, r in curve.points} == {(1, 1, 0, 2 / 3)}
    assert [r.theta for _, r in curve.points] == [0.1, 0.5, 0.9]


def test_confidence_filter_removes_fp():
    gts = [AnnotationSet("a", 200, 2, [_rect(0, 10)])]
    preds = [PredictionSet("a", 200, 2, [Prediction(_rect(0, 10), 0.3),
                                         Prediction(_rect(50, 60), 0.2)])]
    curve = confidence_sweep(preds, gts, [0.1, 0.25], tau=0.15)
    assert curve.report_at(0.1).precision == 0.5
    assert curve.report_at(0.25).precision == 1.0
    assert curve.report_at(0.25).theta == 0.25


@pytest.mark.parametrize("grid", [[], [0.3, 0.2], [0.0, 0.1], [0.2, 1.2]])
def test_iou_grid_validation(grid):
    with pytest.raises(InputError):
        iou_sweep(scenes=[], thresholds=grid)


def test_confidence_grid_validation():
    with pytest.raises(InputError):
        confidence_sweep(scenes=[], thetas=[])
    with pytest.raises(InputError):
        confidence_sweep(scenes=[], thetas=[0.2, 1.0])


def test_select_threshold_tie_smallest():
    sel = select_threshold(_curve([0.5, 0.7, 0.7], [0.2, 0.3, 0.4]))
    assert sel.value == 0.3 and sel.objective == 0.7
    assert select_threshold(_curve([0.4], [0.35])).value == 0.35


def test_degradation_examples():
    c = _curve([0.638, 0.638, 0.634, 0.598], [0.1, 0.15, 0.3, 0.5])
    assert degradation_stats(c, 0.1, 0.5) == 4.0
    assert degradation_stats(_curve([0.5, 0.5], [0.1, 0.5]), 0.1, 0.5) == 0.0
    with pytest.raises(InputError):
        degradation_stats(c, 0.1, 0.45)


def test_non_monotone_diagnostic():
    c = _curve([0.6, 0.7, 0.5], [0.1, 0.2, 0.3])
    assert c.increases() == [(0.1, 0.2)]
    assert _curve([0.7, 0.6], [0.1, 0.2]).increases() == []


def test_curve_rejects_unordered():
    with pytest.raises(InputError):
        _curve([0.1, 0.2], [0.3, 0.2])


_random_scene = st.tuples(
    st.lists(st.tuples(st.integers(0, 180), st.integers(2, 20)), max_size=6),
    st.lists(st.tuples(st.integers(0, 180), st.integers(2, 20), st.floats(0, 1)), max_size=6),
)


def _build(spec):
    gspec, pspec = spec
    gts = AnnotationSet("a", 200, 2, [_rect(x, x + w) for x, w in gspec])
    preds = PredictionSet("a", 200, 2, [Prediction(_rect(x, x + w), s) for x, w, s in pspec])
    return preds, gts


@settings(max_examples=100, deadline=None)
@given(st.lists(_random_scene, min_size=1, max_size=3))
def test_sweep_points_equal_single_evaluations(specs):
    built = [_build(s) for s in specs]
    preds, gts = [b[0] for b in built], [b[1] for b in built]
    curve = iou_sweep(preds, gts, threads=2)
    for t, r in curve.points:
        assert r == dataset_metrics([match_instances(p, g, t) for p, g in built])
    cc = confidence_sweep(preds, gts)
    for th, r in cc.points:
        filt = [match_instances(p.filter_confidence(th), g, 0.15) for p, g in built]
        assert r == dataset_metrics(filt, th)


@settings(max_examples=100, deadline=None)
@given(_random_scene, st.lists(st.floats(0, 0.95), min_size=2, max_size=2, unique=True))
def test_filtering_monotone(spec, thetas):
    preds, gts = _build(spec)
    lo, hi = sorted(thetas)
    kept_lo = {id(p.geometry) for p in preds.filter_confidence(lo).items}
    kept_hi = {id(p.geometry) for p in preds.filter_confidence(hi).items}
    assert kept_hi <= kept_lo
    # Under the maximum-matching oracle, recall cannot rise when predictions are removed.
    iou = prepare_scene(preds, gts).iou
    conf = preds.confidences
    for t in (0.15, 0.5):
        full = (iou >= t) & (conf[:, None] >= lo)
        part = (iou >= t) & (conf[:, None] >= hi)
        assert max_matching_size(part.tolist()) <= max_matching_size(full.tolist())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.data())
def test_degradation_antisymmetric(f1s, data):
    ts = [round(0.05 * (k + 1), 2) for k in range(len(f1s))]
    c = _curve(f1s, ts)
    a, b = data.draw(st.sampled_from(ts)), data.draw(st.sampled_from(ts))
    assert degradation_stats(c, a, b) == -degradation_stats(c, b, a)
    assert degradation_stats(c, a, b, None) == -degradation_stats(c, b, a, None)
