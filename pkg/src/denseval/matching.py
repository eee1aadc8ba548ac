"""One-to-one instance matching and the metrics computed from it."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import schemas
from .exceptions import FormatError, GeometryError, InputError
from .geometry import as_mask, iou_matrix
from .structures import AnnotationSet, PredictionSet

EMPTY_POLICIES = ("perfect", "zero", "exclude")


@dataclass
class MatchOutcome:
    image_id: str
    tau: float
    matches: list = field(default_factory=list)      # (pred index, gt index, iou)
    fp_indices: list = field(default_factory=list)
    fn_indices: list = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.fp_indices)

    @property
    def fn(self) -> int:
        return len(self.fn_indices)


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    mean_image_f1: float
    tau: float
    theta: float
    ap50: float | None = None

    @property
    def n_gt(self) -> int:
        return self.tp + self.fn

    def rates(self) -> dict:
        """TP/FP/FN as fractions of the ground-truth count."""
        n = self.n_gt
        if n == 0:
            return {"tp_rate": None, "fp_rate": None, "fn_rate": None}
        return {"tp_rate": self.tp / n, "fp_rate": self.fp / n, "fn_rate": self.fn / n}

    def to_dict(self) -> dict:
        """Report view: percentages with one decimal, thresholds with four."""
        def pct(x):
            return None if x is None else round(100.0 * x, 1)
        out = {"tp": self.tp, "fp": self.fp, "fn": self.fn,
               "precision": pct(self.precision), "recall": pct(self.recall), "f1": pct(self.f1),
               "mean_image_f1": pct(self.mean_image_f1), "ap50": pct(self.ap50),
               "tau": round(self.tau, 4), "theta": round(self.theta, 4)}
        out.update({k: pct(v) for k, v in self.rates().items()})
        return out


@dataclass
class Scene:
    """Cached per-image IoU structure, reusable across thresholds."""

    image_id: str
    iou: np.ndarray          # predictions x ground truth
    scores: np.ndarray
    pred_index: np.ndarray   # original prediction indices of the rows
    gt_index: np.ndarray     # original ground-truth indices of the columns
    dropped_predictions: int = 0
    dropped_ground_truth: int = 0

    @property
    def n_gt(self) -> int:
        return len(self.gt_index)


def prepare_scene(preds: PredictionSet, gts: AnnotationSet) -> Scene:
    """Rasterize both sides and compute their IoU matrix.

    Predictions that rasterize to an empty mask are dropped here and counted.
    """
    if (preds.width, preds.height) != (gts.width, gts.height):
        raise GeometryError(f"image {gts.image_id!r}: prediction lattice {preds.width}x{preds.height}"
                            f" differs from ground truth {gts.width}x{gts.height}")
    w, h = gts.width, gts.height
    pm = [as_mask(p.geometry, w, h) for p in preds.items]
    gm = [as_mask(g, w, h) for g in gts.instances]
    p_ok = [i for i, m in enumerate(pm) if not m.is_empty]
    g_ok = [j for j, m in enumerate(gm) if not m.is_empty]
    iou = iou_matrix([pm[i] for i in p_ok], [gm[j] for j in g_ok])
    scores = np.array([preds.items[i].confidence for i in p_ok], dtype=float)
    return Scene(gts.image_id, iou, scores, np.array(p_ok, dtype=int), np.array(g_ok, dtype=int),
                 len(pm) - len(p_ok), len(gm) - len(g_ok))


def greedy_match(iou: np.ndarray, scores: np.ndarray, tau: float) -> tuple[list, list, list]:
    """Row/column indices of the greedy matching on an IoU matrix.

    Rows are visited by descending score (ties: lower row first); each takes the
    unmatched column with the highest IoU >= tau (ties: lower column first).
    """
    n_p, n_g = iou.shape
    taken = np.zeros(n_g, dtype=bool)
    matches, fps = [], []
    for i in np.argsort(-np.asarray(scores, dtype=float), kind="stable"):
        if n_g:
            row = np.where(taken, -1.0, iou[i])
            j = int(np.argmax(row))
            if row[j] >= tau:
                taken[j] = True
                matches.append((int(i), j, float(iou[i, j])))
                continue
        fps.append(int(i))
    return matches, sorted(fps), [j for j in range(n_g) if not taken[j]]


def _check_tau(tau: float) -> None:
    if not 0.0 < tau <= 1.0:
        raise InputError(f"IoU threshold must lie in (0, 1], got {tau}")


def match_scene(scene: Scene, tau: float, theta: float = 0.0) -> MatchOutcome:
    _check_tau(tau)
    rows = np.flatnonzero(scene.scores >= theta)
    matches, fps, fns = greedy_match(scene.iou[rows], scene.scores[rows], tau)
    pi, gi = scene.pred_index, scene.gt_index
    return MatchOutcome(
        scene.image_id, tau,
        [(int(pi[rows[r]]), int(gi[c]), v) for r, c, v in matches],
        [int(pi[rows[r]]) for r in fps],
        [int(gi[c]) for c in fns],
    )


def match_instances(preds: PredictionSet, gts: AnnotationSet, tau: float) -> MatchOutcome:
    """Greedy confidence-ordered one-to-one matching at IoU threshold ``tau``."""
    _check_tau(tau)
    return match_scene(prepare_scene(preds, gts), tau)


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F1 with totals for the degenerate cases.

    No predictions and no ground truth scores 1/1/1; no predictions scores
    precision 1, recall 0; no ground truth scores precision 0, recall 1.
    """
    if tp + fp == 0 and tp + fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def _taus(outcomes: Sequence[MatchOutcome]) -> float:
    taus = {o.tau for o in outcomes}
    if len(taus) != 1:
        raise InputError(f"outcomes mix IoU thresholds: {sorted(taus)}")
    return taus.pop()


def mean_image_f1(outcomes: Sequence[MatchOutcome], empty_policy: str = "perfect") -> float:
    """Unweighted mean of per-image F1.

    ``empty_policy`` scores images with neither predictions nor ground truth:
    ``perfect`` (1.0), ``zero`` (0.0) or ``exclude``.
    """
    if not outcomes:
        raise InputError("mean image F1 of zero images is undefined")
    if empty_policy not in EMPTY_POLICIES:
        raise InputError(f"empty_policy must be one of {EMPTY_POLICIES}")
    scores = []
    for o in outcomes:
        if o.tp + o.fp + o.fn == 0:
            if empty_policy == "exclude":
                continue
            scores.append(1.0 if empty_policy == "perfect" else 0.0)
        else:
            scores.append(prf(o.tp, o.fp, o.fn)[2])
    if not scores:
        raise InputError("every image was excluded from the mean image F1")
    return math.fsum(scores) / len(scores)


def dataset_metrics(outcomes: Sequence[MatchOutcome], theta: float = 0.0,
                    empty_policy: str = "perfect", ap50: float | None = None) -> MetricsReport:
    if not outcomes:
        raise InputError("no match outcomes to aggregate")
    tau = _taus(outcomes)
    tp = sum(o.tp for o in outcomes)
    fp = sum(o.fp for o in outcomes)
    fn = sum(o.fn for o in outcomes)
    p, r, f1 = prf(tp, fp, fn)
    return MetricsReport(tp, fp, fn, p, r, f1, mean_image_f1(outcomes, empty_policy), tau, theta,
                         ap50)


def metrics_from_counts(tp: int, fp: int, fn: int, tau: float = 0.15,
                        theta: float = 0.0) -> MetricsReport:
    """Report for already-aggregated counts (a single pseudo-image)."""
    outcome = MatchOutcome("", tau, [(i, i, 1.0) for i in range(tp)],
                           list(range(tp, tp + fp)), list(range(tp, tp + fn)))
    return dataset_metrics([outcome], theta)


def average_precision(scenes: Sequence[Scene], tau: float = 0.5) -> float:
    """All-point interpolated AP over a global confidence ranking."""
    n_gt = sum(s.n_gt for s in scenes)
    if n_gt == 0:
        raise InputError("average precision needs at least one ground-truth instance")
    scores, hits = [], []
    for s in scenes:
        matches, _, _ = greedy_match(s.iou, s.scores, tau)
        hit = np.zeros(len(s.scores), dtype=bool)
        hit[[m[0] for m in matches]] = True
        scores.append(s.scores)
        hits.append(hit)
    if not scores or sum(len(x) for x in scores) == 0:
        return 0.0
    scores = np.concatenate(scores)
    hits = np.concatenate(hits)[np.argsort(-scores, kind="stable")]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * envelope))


def average_precision_50(preds: Sequence[PredictionSet], gts: Sequence[AnnotationSet]) -> float:
    if len(preds) != len(gts):
        raise InputError("predictions and ground truth must list the same images")
    return average_precision([prepare_scene(p, g) for p, g in zip(preds, gts)], 0.5)


# ---------------------------------------------------------------------------
# Compute profile and efficiency
# ---------------------------------------------------------------------------

@dataclass
class ComputeProfile:
    model: str
    parameter_count: int | None = None
    gflops: float | None = None
    times_ms: list = field(default_factory=list)
    gpu_gb: float | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ComputeProfile":
        try:
            jsonschema.validate(doc, schemas.COMPUTE_PROFILE)
        except jsonschema.ValidationError as exc:
            raise FormatError(f"compute profile violates schema: {exc.message}") from None
        return cls(doc["model"], doc.get("params"), doc.get("gflops"),
                   list(doc.get("times_ms", [])), doc.get("gpu_gb"))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ComputeProfile":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: cannot read compute profile ({exc})") from exc
        return cls.from_dict(doc)


@dataclass
class Efficiency:
    model: str
    f1_per_gflop: float | None
    total_ms: float | None
    mean_ms: float | None
    gpu_gb: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("f1_per_gflop", "total_ms", "mean_ms", "gpu_gb"):
            if d[k] is not None:
                d[k] = round(d[k], 4)
        return d


def efficiency_metrics(report: MetricsReport | float, profile: ComputeProfile) -> Efficiency:
    """F1 points per GFLOP plus total and mean per-image runtime.

    ``report`` may be a MetricsReport or an F1 value already in percent.
    """
    f1_pct = 100.0 * report.f1 if isinstance(report, MetricsReport) else float(report)
    e = None
    if profile.gflops is not None:
        if profile.gflops <= 0:
            raise InputError(f"GFLOPs must be positive, got {profile.gflops}")
        e = f1_pct / profile.gflops
    total = mean = None
    if profile.times_ms:
        if min(profile.times_ms) < 0:
            raise InputError("per-image times must be non-negative")
        total = math.fsum(profile.times_ms)
        mean = total / len(profile.times_ms)
    return Efficiency(profile.model, e, total, mean, profile.gpu_gb)
