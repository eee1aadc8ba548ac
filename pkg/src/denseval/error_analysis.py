"""Rule-based categorization of false positives and false negatives.

Each error gets exactly one category. All rules are evaluated and recorded;
the first rule in the precedence order that fires decides the category.

* ``background_clutter`` (FP only): no ground-truth centroid within the clutter radius.
* ``occluded``: at least ``occlusion_min`` ground-truth centroids within the
  occlusion radius (a missed ground truth counts itself).
* ``boundary``: centroid closer than ``boundary_margin`` to the nearest image edge.
* ``low_contrast``: luminance standard deviation below the cutoff inside the
  instance box grown by ``contrast_pad`` pixels.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import FormatError, GeometryError, InputError
from .geometry import as_mask
from .matching import MatchOutcome
from .structures import AnnotationSet, PredictionSet

BOUNDARY = "boundary"
LOW_CONTRAST = "low_contrast"
CLUTTER = "background_clutter"
OCCLUDED = "occluded"
UNCATEGORIZED = "uncategorized"
CATEGORIES = (BOUNDARY, LOW_CONTRAST, CLUTTER, OCCLUDED, UNCATEGORIZED)
DEFAULT_PRECEDENCE = (CLUTTER, OCCLUDED, BOUNDARY, LOW_CONTRAST)
ERROR_KINDS = ("fp", "fn")


@dataclass(frozen=True)
class ErrorRules:
    boundary_margin: float = 50.0
    contrast_cutoff: float | None = 30.0   # None disables the contrast rule
    contrast_pad: int = 25
    clutter_radius: float = 100.0
    occlusion_radius: float = 200.0
    occlusion_min: int = 5
    precedence: tuple = DEFAULT_PRECEDENCE

    def __post_init__(self):
        bad = [c for c in self.precedence if c not in CATEGORIES or c == UNCATEGORIZED]
        if bad or len(set(self.precedence)) != len(self.precedence):
            raise InputError(f"invalid category precedence {list(self.precedence)}")
        if self.clutter_radius <= 0 or self.occlusion_radius <= 0:
            raise InputError("neighbourhood radii must be positive")
        if self.boundary_margin < 0 or self.contrast_pad < 0:
            raise InputError("boundary margin and contrast padding must be non-negative")


@dataclass(eq=False)
class LuminanceImage:
    values: np.ndarray

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])


def luminance_from_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=float)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def load_luminance(path: str | os.PathLike) -> LuminanceImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return LuminanceImage(np.array(im))
            if im.mode in ("P", "RGBA", "LA", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            if im.mode != "RGB":
                raise FormatError(f"{path}: unsupported image mode {im.mode!r}")
            return LuminanceImage(luminance_from_rgb(np.array(im)))
    except (OSError, UnidentifiedImageError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from exc


def local_contrast(img: LuminanceImage, region: tuple[int, int, int, int]) -> float:
    """Population standard deviation of luminance over an inclusive box clipped to the image."""
    x0, y0, x1, y1 = region
    x0, y0 = max(0, int(x0)), max(0, int(y0))
    x1, y1 = min(img.width - 1, int(x1)), min(img.height - 1, int(y1))
    if x0 > x1 or y0 > y1:
        raise GeometryError(f"region {region} does not intersect the image")
    return float(np.std(img.values[y0:y1 + 1, x0:x1 + 1], dtype=np.float64))


def _centroids(gts: AnnotationSet) -> np.ndarray:
    pts = []
    for g in gts.instances:
        m = as_mask(g, gts.width, gts.height)
        if not m.is_empty:
            pts.append(m.centroid)
    return np.array(pts, dtype=float).reshape(-1, 2)


def neighborhood_density(gts: AnnotationSet | np.ndarray, center: tuple[float, float],
                         radius: float) -> int:
    """Ground-truth centroids within the closed ball of ``radius`` around ``center``."""
    if radius <= 0:
        raise InputError("radius must be positive")
    pts = _centroids(gts) if isinstance(gts, AnnotationSet) else np.asarray(gts, float).reshape(-1, 2)
    d2 = ((pts - np.asarray(center, dtype=float)) ** 2).sum(axis=1)
    return int(np.count_nonzero(d2 <= radius * radius))


@dataclass
class ErrorRecord:
    image_id: str
    error_kind: str
    index: int
    category: str
    centroid: tuple
    measurements: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["centroid"] = [round(c, 2) for c in self.centroid]
        d["measurements"] = {k: (round(v, 4) if isinstance(v, float) else v)
                             for k, v in self.measurements.items()}
        return d


@dataclass
class ErrorBreakdown:
    counts: dict = field(default_factory=lambda: {k: {c: 0 for c in CATEGORIES}
                                                  for k in ERROR_KINDS})
    records: list = field(default_factory=list)
    precedence: tuple = DEFAULT_PRECEDENCE

    def total(self, kind: str) -> int:
        return sum(self.counts[kind].values())

    def percentages(self, kind: str) -> dict:
        """Category shares in percent of the total errors of that kind."""
        n = self.total(kind)
        return {c: (round(100.0 * v / n, 1) if n else 0.0) for c, v in self.counts[kind].items()}

    def rows(self) -> list[tuple[str, str, int]]:
        return [(k, c, self.counts[k][c]) for k in ERROR_KINDS for c in CATEGORIES]

    @classmethod
    def combine(cls, parts: Sequence["ErrorBreakdown"],
                precedence: tuple = DEFAULT_PRECEDENCE) -> "ErrorBreakdown":
        out = cls(precedence=precedence)
        for p in parts:
            for k in ERROR_KINDS:
                for c, v in p.counts[k].items():
                    out.counts[k][c] += v
            out.records.extend(p.records)
        return out


def _classify(kind, center, bbox, width, height, gt_pts, img, rules):
    cx, cy = center
    edge = min(cx, cy, (width - 1) - cx, (height - 1) - cy)
    near_clutter = neighborhood_density(gt_pts, center, rules.clutter_radius)
    near_occl = neighborhood_density(gt_pts, center, rules.occlusion_radius)
    fired = {
        BOUNDARY: edge < rules.boundary_margin,
        OCCLUDED: near_occl >= rules.occlusion_min,
        CLUTTER: kind == "fp" and near_clutter == 0,
    }
    meas = {"edge_distance": float(edge), "gt_within_clutter_radius": near_clutter,
            "gt_within_occlusion_radius": near_occl}
    if rules.contrast_cutoff is not None:
        pad = rules.contrast_pad
        std = local_contrast(img, (bbox[0] - pad, bbox[1] - pad, bbox[2] + pad, bbox[3] + pad))
        meas["local_std"] = std
        fired[LOW_CONTRAST] = std < rules.contrast_cutoff
    for cat in rules.precedence:
        if fired.get(cat):
            return cat, meas
    return UNCATEGORIZED, meas


def categorize_errors(outcome: MatchOutcome, gts: AnnotationSet, preds: PredictionSet,
                      img: LuminanceImage | None, rules: ErrorRules = ErrorRules()) -> ErrorBreakdown:
    """Assign one failure-mode category to every FP and FN of ``outcome``."""
    w, h = gts.width, gts.height
    if (preds.width, preds.height) != (w, h):
        raise GeometryError("prediction and ground-truth lattices differ")
    if rules.contrast_cutoff is not None:
        if img is None:
            raise InputError(f"image {gts.image_id!r}: the contrast rule needs a luminance image")
        if (img.width, img.height) != (w, h):
            raise GeometryError(f"image {gts.image_id!r}: luminance image is {img.width}x{img.height},"
                                f" label lattice is {w}x{h}")
    gt_pts = _centroids(gts)
    out = ErrorBreakdown(precedence=tuple(rules.precedence))
    jobs = [("fp", i, preds.items[i].geometry) for i in outcome.fp_indices]
    jobs += [("fn", j, gts.instances[j]) for j in outcome.fn_indices]
    for kind, idx, geom in jobs:
        m = as_mask(geom, w, h)
        if m.is_empty:
            raise GeometryError(f"image {gts.image_id!r}: {kind} {idx} has an empty mask")
        cat, meas = _classify(kind, m.centroid, m.bbox, w, h, gt_pts, img, rules)
        out.counts[kind][cat] += 1
        out.records.append(ErrorRecord(gts.image_id, kind, idx, cat, m.centroid, meas))
    return out
