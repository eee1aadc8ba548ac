"""IoU and confidence threshold sweeps, operating-point selection and degradation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .exceptions import InputError
from .matching import MetricsReport, Scene, dataset_metrics, match_scene, prepare_scene
from .structures import AnnotationSet, PredictionSet

IOU_AXIS = "iou_threshold"
CONFIDENCE_AXIS = "confidence_threshold"

# Rounded so that e.g. 0.15 is the literal 0.15 and not 3 * 0.05.
DEFAULT_IOU_GRID = tuple(round(0.05 * k, 2) for k in range(1, 11))
DEFAULT_CONFIDENCE_GRID = tuple(round(0.15 + 0.05 * k, 2) for k in range(6))


@dataclass
class SweepCurve:
    axis: str
    points: list = field(default_factory=list)   # (threshold, MetricsReport)

    def __post_init__(self):
        ts = self.thresholds
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InputError("sweep thresholds must be strictly increasing")

    @property
    def thresholds(self) -> list[float]:
        return [t for t, _ in self.points]

    @property
    def f1(self) -> list[float]:
        return [r.f1 for _, r in self.points]

    def report_at(self, threshold: float) -> MetricsReport:
        for t, r in self.points:
            if math.isclose(t, threshold, rel_tol=0.0, abs_tol=1e-9):
                return r
        raise InputError(f"threshold {threshold} is not on the {self.axis} curve "
                         f"({self.thresholds})")

    def increases(self) -> list[tuple[float, float]]:
        """Consecutive threshold pairs where F1 rose; empty for a non-increasing curve."""
        return [(t0, t1) for (t0, r0), (t1, r1) in zip(self.points, self.points[1:])
                if r1.f1 > r0.f1]


@dataclass
class ThresholdSelection:
    value: float
    objective: float
    curve: SweepCurve


def _validate_grid(values: Sequence[float], in_range, name: str) -> list[float]:
    values = [float(v) for v in values]
    if not values:
        raise InputError(f"{name} grid is empty")
    for v in values:
        if not in_range(v):
            raise InputError(f"{name} threshold {v} out of range")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InputError(f"{name} thresholds must be strictly increasing")
    return values


def _scenes(preds, gts, scenes) -> list[Scene]:
    if scenes is not None:
        return list(scenes)
    if preds is None or gts is None or len(preds) != len(gts):
        raise InputError("pass matching lists of predictions and ground truth, or prepared scenes")
    return [prepare_scene(p, g) for p, g in zip(preds, gts)]


def _evaluate(scenes, tau, theta, empty_policy) -> MetricsReport:
    return dataset_metrics([match_scene(s, tau, theta) for s in scenes], theta, empty_policy)


def _run(fn, grid, threads):
    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, grid))
    return [fn(t) for t in grid]


def iou_sweep(preds: Sequence[PredictionSet] | None = None,
              gts: Sequence[AnnotationSet] | None = None,
              thresholds: Sequence[float] = DEFAULT_IOU_GRID, *, theta: float = 0.0,
              scenes: Sequence[Scene] | None = None, empty_policy: str = "perfect",
              threads: int = 1) -> SweepCurve:
    """Independent matching pass per IoU threshold (IoU matrices computed once)."""
    grid = _validate_grid(thresholds, lambda v: 0.0 < v <= 1.0, "IoU")
    sc = _scenes(preds, gts, scenes)
    reports = _run(lambda t: _evaluate(sc, t, theta, empty_policy), grid, threads)
    return SweepCurve(IOU_AXIS, list(zip(grid, reports)))


def confidence_sweep(preds: Sequence[PredictionSet] | None = None,
                     gts: Sequence[AnnotationSet] | None = None,
                     thetas: Sequence[float] = DEFAULT_CONFIDENCE_GRID, tau: float = 0.15, *,
                     scenes: Sequence[Scene] | None = None, empty_policy: str = "perfect",
                     threads: int = 1) -> SweepCurve:
    """Filter by confidence >= theta, then match at the fixed ``tau``."""
    grid = _validate_grid(thetas, lambda v: 0.0 <= v < 1.0, "confidence")
    sc = _scenes(preds, gts, scenes)
    reports = _run(lambda th: _evaluate(sc, tau, th, empty_policy), grid, threads)
    return SweepCurve(CONFIDENCE_AXIS, list(zip(grid, reports)))


def select_threshold(curve: SweepCurve) -> ThresholdSelection:
    """Smallest threshold attaining the maximal F1."""
    if not curve.points:
        raise InputError("cannot select a threshold from an empty curve")
    best = max(curve.f1)
    for t, r in curve.points:
        if r.f1 == best:
            return ThresholdSelection(t, best, curve)
    raise AssertionError("unreachable")


def degradation_stats(curve: SweepCurve, from_threshold: float, to_threshold: float,
                      decimals: int | None = 1) -> float:
    """F1(from) - F1(to) in percentage points, rounded like the reports unless ``decimals=None``."""
    delta = 100.0 * (curve.report_at(from_threshold).f1 - curve.report_at(to_threshold).f1)
    return delta if decimals is None else round(delta, decimals) + 0.0
