"""Synthetic ellipse-field datasets with predictions of known quality.

Used for desk-scale checks: label maps of non-overlapping ellipses, a matching
luminance image, and prediction sets derived from the ground truth under one
of three perturbation profiles (``exact``, ``coarse``, ``dropout``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .exceptions import InputError
from .geometry import mask_iou
from .mask_io import dump_prediction_index, extract_instances, save_label_map
from .structures import InstanceMask, LabelMap, Prediction, PredictionSet

_GAP = 2
_MAX_TRIES = 2000


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    angle: float

    @property
    def radius(self) -> float:
        return max(self.a, self.b)


def place_ellipses(rng: np.random.Generator, width: int, height: int, count: int,
                   min_diameter: float, max_diameter: float) -> list[Ellipse]:
    """Rejection-sample ellipses whose bounding circles keep a small gap."""
    if min_diameter < 1 or max_diameter < min_diameter:
        raise InputError("need 1 <= min_diameter <= max_diameter")
    placed: list[Ellipse] = []
    for n in range(count):
        for _ in range(_MAX_TRIES):
            a = rng.uniform(min_diameter, max_diameter) / 2
            b = rng.uniform(min_diameter, max_diameter) / 2
            r = max(a, b)
            if 2 * r + 2 > min(width, height):
                continue
            cx = rng.uniform(r + 1, width - 2 - r)
            cy = rng.uniform(r + 1, height - 2 - r)
            if all(math.hypot(cx - e.cx, cy - e.cy) >= r + e.radius + _GAP for e in placed):
                placed.append(Ellipse(cx, cy, a, b, rng.uniform(0, math.pi)))
                break
        else:
            raise InputError(f"cannot pack {count} ellipses into {width}x{height} "
                             f"(placed {n}); lower synth_instances or the diameters")
    return placed


def ellipse_bits(e: Ellipse, width: int, height: int) -> InstanceMask:
    r = math.ceil(e.radius) + 1
    x0, x1 = max(0, math.floor(e.cx) - r), min(width - 1, math.ceil(e.cx) + r)
    y0, y1 = max(0, math.floor(e.cy) - r), min(height - 1, math.ceil(e.cy) + r)
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    dx, dy = xx - e.cx, yy - e.cy
    c, s = math.cos(e.angle), math.sin(e.angle)
    u, v = dx * c + dy * s, -dx * s + dy * c
    inside = (u / e.a) ** 2 + (v / e.b) ** 2 <= 1.0
    return InstanceMask(width, height, x0, y0, inside)


def render_label_map(ellipses: list[Ellipse], width: int, height: int) -> np.ndarray:
    dtype = np.uint8 if len(ellipses) <= 255 else np.uint16
    out = np.zeros((height, width), dtype=dtype)
    for k, e in enumerate(ellipses, start=1):
        m = ellipse_bits(e, width, height)
        h, w = m.crop.shape
        out[m.y0:m.y0 + h, m.x0:m.x0 + w][m.crop] = k
    return out


def render_luminance(rng: np.random.Generator, labels: np.ndarray) -> np.ndarray:
    """Noisy foliage-like background with brighter, smoother fruit."""
    h, w = labels.shape
    bg = rng.normal(70.0, 45.0, size=(h, w))
    fruit = rng.normal(185.0, 12.0, size=(h, w))
    img = np.where(labels > 0, fruit, bg)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _shift(mask: InstanceMask, dx: int, dy: int) -> InstanceMask:
    h, w = mask.crop.shape
    x0, y0 = mask.x0 + dx, mask.y0 + dy
    cx0, cy0 = max(0, -x0), max(0, -y0)
    cx1, cy1 = min(w, mask.width - x0), min(h, mask.height - y0)
    if cx0 >= cx1 or cy0 >= cy1:
        return InstanceMask(mask.width, mask.height, 0, 0, np.zeros((0, 0), bool))
    return InstanceMask(mask.width, mask.height, x0 + cx0, y0 + cy0,
                        mask.crop[cy0:cy1, cx0:cx1])


def _dilate(mask: InstanceMask, k: int) -> InstanceMask:
    pad = np.pad(mask.crop, k)
    grown = ndimage.binary_dilation(pad, iterations=k)
    x0, y0 = mask.x0 - k, mask.y0 - k
    cx0, cy0 = max(0, -x0), max(0, -y0)
    cx1 = min(grown.shape[1], mask.width - x0)
    cy1 = min(grown.shape[0], mask.height - y0)
    return InstanceMask(mask.width, mask.height, x0 + cx0, y0 + cy0, grown[cy0:cy1, cx0:cx1])


def coarsen(rng: np.random.Generator, mask: InstanceMask, low: float, high: float) -> InstanceMask:
    """Shift or dilate ``mask`` so its IoU with the original lands in ``[low, high]``."""
    target = rng.uniform(low, high)
    candidates = []
    if rng.random() < 0.5:
        phi = rng.uniform(0, 2 * math.pi)
        for step in range(1, 4 * max(mask.crop.shape) + 1):
            d = 0.5 * step
            m = _shift(mask, round(d * math.cos(phi)), round(d * math.sin(phi)))
            if m.is_empty:
                break
            iou = mask_iou(m, mask)
            candidates.append((iou, m))
            if iou < low:
                break
    else:
        for k in range(1, 4 * max(mask.crop.shape) + 1):
            m = _dilate(mask, k)
            iou = mask_iou(m, mask)
            candidates.append((iou, m))
            if iou < low:
                break
    inside = [(abs(i - target), n, m) for n, (i, m) in enumerate(candidates) if low <= i <= high]
    if not inside:
        raise InputError("could not coarsen a mask into the requested IoU band; "
                         "use larger synth_min_diameter")
    return min(inside, key=lambda t: (t[0], t[1]))[2]


def make_predictions(rng: np.random.Generator, image_id: str, labels: np.ndarray, profile: str,
                     dropout: float = 0.5, iou_low: float = 0.35, iou_high: float = 0.65,
                     false_positives: int = 0, min_diameter: float = 30,
                     max_diameter: float = 60) -> PredictionSet:
    h, w = labels.shape
    items = []
    for gt in extract_instances(LabelMap(labels, image_id)):
        if profile == "dropout" and rng.random() < dropout:
            continue
        geom = coarsen(rng, gt, iou_low, iou_high) if profile == "coarse" else gt
        items.append(Prediction(geom, round(float(rng.uniform(0.5, 1.0)), 4)))
    for _ in range(false_positives):
        d = rng.uniform(min_diameter, max_diameter)
        e = Ellipse(rng.uniform(0, w - 1), rng.uniform(0, h - 1), d / 2, d / 2, 0.0)
        m = ellipse_bits(e, w, h)
        if not m.is_empty:
            items.append(Prediction(m, round(float(rng.uniform(0.36, 0.9)), 4)))
    return PredictionSet(image_id, w, h, items)


def generate_dataset(out_dir: str | Path, *, seed: int = 0, images: int = 20,
                     instances: int = 40, width: int = 1280, height: int = 960,
                     profile: str = "exact", dropout: float = 0.5, iou_low: float = 0.35,
                     iou_high: float = 0.65, min_diameter: float = 30, max_diameter: float = 60,
                     false_positives: int = 0, split: str = "test") -> dict:
    """Write label maps, luminance images, a prediction index and a manifest.

    Output is a pure function of the arguments, so equal seeds give identical files.
    """
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pred_sets, pairs = [], []
    total = 0
    for i in range(images):
        image_id = f"img_{i:04d}"
        ellipses = place_ellipses(rng, width, height, instances, min_diameter, max_diameter)
        labels = render_label_map(ellipses, width, height)
        save_label_map(labels, out / "labels" / f"{image_id}.png")
        Image.fromarray(render_luminance(rng, labels)).save(out / "images" / f"{image_id}.png")
        pred_sets.append(make_predictions(rng, image_id, labels, profile, dropout, iou_low,
                                          iou_high, false_positives, min_diameter, max_diameter))
        pairs.append([f"images/{image_id}.png", f"labels/{image_id}.png"])
        total += len(ellipses)
    (out / "predictions.json").write_text(json.dumps(dump_prediction_index(pred_sets)) + "\n")
    (out / "manifest.json").write_text(json.dumps({split: pairs}, indent=2) + "\n")
    summary = {"seed": seed, "images": images, "instances": total, "profile": profile,
               "width": width, "height": height,
               "predictions": sum(len(p.items) for p in pred_sets)}
    (out / "synth_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
