"""Pixel-lattice geometry: contour tracing, Douglas-Peucker simplification,
coordinate normalization, polygon rasterization, mask IoU, RLE and mask NMS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import GeometryError, InputError
from .structures import Contour, InstanceMask, Polygon, PredictionSet

# (dx, dy) neighbours in clockwise order (y axis pointing down), starting west.
_RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_RING_INDEX = {off: i for i, off in enumerate(_RING)}


@dataclass(frozen=True)
class SimplificationParams:
    alpha: float = 0.001

    def __post_init__(self):
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise InputError(f"alpha must be a finite value >= 0, got {self.alpha}")


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------

def trace_external_contour(mask: InstanceMask) -> Contour:
    """Outer boundary of a single 8-connected component via Moore-neighbour tracing.

    Holes are ignored. Straight runs are collapsed to their end points, so the
    result keeps only direction changes (reversals at one-pixel spurs stay).
    A single pixel gives a one-vertex degenerate contour.
    """
    if mask.is_empty:
        raise GeometryError("cannot trace the contour of an empty mask")
    img = np.pad(mask.crop, 1)
    pts = _moore_trace(img)
    verts = np.asarray(pts, dtype=np.int64) - 1 + np.array([mask.x0, mask.y0])
    return Contour(collapse_collinear(verts))


def _moore_trace(img: np.ndarray) -> list[tuple[int, int]]:
    ys, xs = np.nonzero(img)
    start = (int(xs[0]), int(ys[0]))  # topmost, then leftmost: west is background
    c, back = start, 0
    pts = [start]
    second = None
    limit = 4 * len(xs) + 16
    for _ in range(limit):
        for k in range(1, 9):
            d = (back + k) % 8
            p = (c[0] + _RING[d][0], c[1] + _RING[d][1])
            if img[p[1], p[0]]:
                break
        else:
            return pts
        if second is None:
            second = p
        elif c == start and p == second:
            break
        prev = _RING[(back + k - 1) % 8]
        back = _RING_INDEX[(c[0] + prev[0] - p[0], c[1] + prev[1] - p[1])]
        c = p
        pts.append(c)
    if len(pts) > 1 and pts[-1] == pts[0]:
        pts.pop()
    return pts


def collapse_collinear(vertices: np.ndarray) -> np.ndarray:
    """Drop vertices lying inside a straight run of a closed chain."""
    v = np.asarray(vertices)
    if len(v) < 3:
        return v
    d_in = v - np.roll(v, 1, axis=0)
    d_out = np.roll(v, -1, axis=0) - v
    cross = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
    dot = (d_in * d_out).sum(axis=1)
    straight = (cross == 0) & (dot > 0)
    if straight.all():
        return v[:1]
    return v[~straight]


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``p`` to the segment ``ab``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(*(p - a).T)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def _dp_keep(pts: np.ndarray, eps: float) -> np.ndarray:
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        d = point_segment_distance(pts[i + 1:j], pts[i], pts[j])
        k = int(np.argmax(d))
        if d[k] > eps:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return keep


def _farthest_pair(pts: np.ndarray) -> tuple[int, int]:
    p = pts.astype(float)
    best, pair = -1.0, (0, 1)
    block = 512
    for s in range(0, len(p), block):
        chunk = p[s:s + block]
        d2 = ((chunk[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
        rows = np.arange(s, s + len(chunk))
        d2[np.arange(len(p))[None, :] <= rows[:, None]] = -1.0
        flat = int(np.argmax(d2))
        val = d2.flat[flat]
        if val > best:
            best = float(val)
            pair = (s + flat // len(p), flat % len(p))
    return pair


def simplify_polygon(contour: Contour, params: SimplificationParams | float) -> Contour:
    """Douglas-Peucker on a closed chain with tolerance ``alpha * perimeter``.

    The chain is split at its two mutually farthest vertices and each half is
    simplified as an open polyline. Vertex order is preserved. If fewer than
    three vertices survive, the input comes back unchanged with ``fallback`` set.
    """
    if not isinstance(params, SimplificationParams):
        params = SimplificationParams(float(params))
    v = contour.vertices
    if contour.degenerate or params.alpha == 0.0:
        return contour
    eps = params.alpha * contour.perimeter
    a, b = _farthest_pair(v)
    n = len(v)
    keep = np.zeros(n, dtype=bool)
    keep[a:b + 1] |= _dp_keep(v[a:b + 1].astype(float), eps)
    loop = np.r_[np.arange(b, n), np.arange(0, a + 1)]
    keep[loop] |= _dp_keep(v[loop].astype(float), eps)
    if keep.sum() < 3:
        return Contour(v, fallback=True)
    return Contour(v[keep])


# ---------------------------------------------------------------------------
# Coordinate normalization
# ---------------------------------------------------------------------------

def normalize_polygon(contour: Contour, width: int, height: int, class_id: int = 0,
                      confidence: float | None = None) -> Polygon:
    v = contour.vertices.astype(float)
    if v[:, 0].min() < 0 or v[:, 1].min() < 0 or v[:, 0].max() > width or v[:, 1].max() > height:
        raise GeometryError(f"contour vertex outside image bounds {width}x{height}")
    return Polygon(v / np.array([width, height], dtype=float), class_id, confidence)


def denormalize_polygon(poly: Polygon, width: int, height: int) -> Contour:
    px = poly.vertices * np.array([width, height], dtype=float)
    return Contour(np.rint(px).astype(np.int64))


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

def serialization_tolerance(width: int, height: int) -> float:
    """Pixel slack that absorbs the 6-decimal rounding of normalized label files."""
    return 5e-7 * max(width, height) + 1e-9


def rasterize_polygon(poly: Polygon, width: int, height: int) -> InstanceMask:
    """Even-odd scanline fill sampling pixel centres; centres on the outline count.

    A polygon with (numerically) zero area rasterizes to an empty mask, which
    matching drops and counts.
    """
    if len(poly.vertices) < 3:
        raise GeometryError("rasterization needs at least 3 vertices")
    px = poly.vertices * np.array([width, height], dtype=float)
    tol = serialization_tolerance(width, height)
    if abs(polygon_area(px)) <= tol * Contour(px).perimeter:
        return InstanceMask(width, height, 0, 0, np.zeros((0, 0), bool))
    return rasterize_vertices(px, width, height, tol)


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area of a closed chain."""
    x, y = np.asarray(vertices, dtype=float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def rasterize_vertices(vertices: np.ndarray, width: int, height: int, tol: float = 1e-9,
                       include_boundary: bool = True) -> InstanceMask:
    """Rasterize a closed chain given in pixel coordinates."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        raise GeometryError("rasterization needs at least 3 vertices")
    xmin = max(0, math.ceil(v[:, 0].min() - tol))
    xmax = min(width - 1, math.floor(v[:, 0].max() + tol))
    ymin = max(0, math.ceil(v[:, 1].min() - tol))
    ymax = min(height - 1, math.floor(v[:, 1].max() + tol))
    if xmin > xmax or ymin > ymax:
        return InstanceMask(width, height, 0, 0, np.zeros((0, 0), bool))
    crop = np.zeros((ymax - ymin + 1, xmax - xmin + 1), dtype=bool)

    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    rows = np.arange(ymin, ymax + 1, dtype=float)[:, None]
    lo, hi = np.minimum(y1, y2), np.maximum(y1, y2)
    active = (lo <= rows) & (rows < hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x1 + (rows - y1) * (x2 - x1) / (y2 - y1)
    xc = np.where(active, xc, np.inf)
    xc.sort(axis=1)
    counts = active.sum(axis=1)
    for r in np.flatnonzero(counts):
        xs = xc[r, :counts[r]]
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c0 = max(xmin, math.ceil(xa - tol))
            c1 = min(xmax, math.floor(xb + tol))
            if c0 <= c1:
                crop[r, c0 - xmin:c1 - xmin + 1] = True

    if include_boundary:
        for i in range(len(v)):
            _mark_segment(crop, xmin, ymin, v[i], v[(i + 1) % len(v)], tol)
    return InstanceMask(width, height, xmin, ymin, crop)


def _mark_segment(crop, xmin, ymin, p, q, tol):
    """Set lattice points lying on segment ``pq`` (within ``tol``)."""
    h, w = crop.shape
    dx, dy = q[0] - p[0], q[1] - p[1]
    if abs(dx) >= abs(dy):
        major, minor, dmaj, dmin, pm, pn = 0, 1, dx, dy, p[0], p[1]
    else:
        major, minor, dmaj, dmin, pm, pn = 1, 0, dy, dx, p[1], p[0]
    lo, hi = min(p[major], q[major]), max(p[major], q[major])
    a = np.arange(math.ceil(lo - tol), math.floor(hi + tol) + 1, dtype=float)
    if a.size == 0:
        return
    if dmaj == 0:
        b = np.full_like(a, pn)
    else:
        t = np.clip((a - pm) / dmaj, 0.0, 1.0)
        b = pn + t * dmin
    on = np.abs(b - np.rint(b)) <= tol
    a, b = a[on].astype(np.int64), np.rint(b[on]).astype(np.int64)
    xs, ys = (a, b) if major == 0 else (b, a)
    xs, ys = xs - xmin, ys - ymin
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    crop[ys[ok], xs[ok]] = True


def as_mask(geometry, width: int, height: int) -> InstanceMask:
    if isinstance(geometry, InstanceMask):
        return geometry
    if isinstance(geometry, Polygon):
        return rasterize_polygon(geometry, width, height)
    raise InputError(f"unsupported geometry type {type(geometry).__name__}")


# ---------------------------------------------------------------------------
# IoU
# ---------------------------------------------------------------------------

def _intersection(a: InstanceMask, b: InstanceMask) -> int:
    if a.is_empty or b.is_empty:
        return 0
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0 = max(ax0, bx0), max(ay0, by0)
    x1, y1 = min(ax1, bx1), min(ay1, by1)
    if x0 > x1 or y0 > y1:
        return 0
    wa = a.crop[y0 - a.y0:y1 - a.y0 + 1, x0 - a.x0:x1 - a.x0 + 1]
    wb = b.crop[y0 - b.y0:y1 - b.y0 + 1, x0 - b.x0:x1 - b.x0 + 1]
    return int(np.count_nonzero(wa & wb))


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
    """Pixel IoU of two masks on the same lattice."""
    if a.shape != b.shape:
        raise GeometryError(f"lattice mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")
    inter = _intersection(a, b)
    union = a.pixel_count + b.pixel_count - inter
    if union == 0:
        raise GeometryError("IoU of two empty masks is undefined")
    return inter / union


def iou_matrix(rows: Sequence[InstanceMask], cols: Sequence[InstanceMask]) -> np.ndarray:
    """Pairwise IoU; only bounding-box-overlapping pairs are evaluated."""
    out = np.zeros((len(rows), len(cols)), dtype=float)
    if not rows or not cols:
        return out
    shapes = {m.shape for m in rows} | {m.shape for m in cols}
    if len(shapes) > 1:
        raise GeometryError(f"lattice mismatch among masks: {sorted(shapes)}")
    rb = np.array([m.bbox for m in rows])
    cb = np.array([m.bbox for m in cols])
    overlap = ((rb[:, None, 0] <= cb[None, :, 2]) & (cb[None, :, 0] <= rb[:, None, 2])
               & (rb[:, None, 1] <= cb[None, :, 3]) & (cb[None, :, 1] <= rb[:, None, 3]))
    for i, j in zip(*np.nonzero(overlap)):
        a, b = rows[i], cols[j]
        inter = _intersection(a, b)
        if inter:
            out[i, j] = inter / (a.pixel_count + b.pixel_count - inter)
    return out


# ---------------------------------------------------------------------------
# Run-length encoding
# ---------------------------------------------------------------------------

def rle_encode(mask: InstanceMask) -> list[int]:
    """Row-major alternating run lengths, starting with the leading zeros."""
    total = mask.width * mask.height
    idx = mask.flat_indices()
    if idx.size == 0:
        return [total]
    breaks = np.flatnonzero(np.diff(idx) != 1) + 1
    starts = idx[np.r_[0, breaks]]
    ends = idx[np.r_[breaks - 1, idx.size - 1]] + 1
    zeros = starts - np.r_[0, ends[:-1]]
    runs = np.empty(2 * len(starts), dtype=np.int64)
    runs[0::2] = zeros
    runs[1::2] = ends - starts
    out = runs.tolist()
    if ends[-1] < total:
        out.append(int(total - ends[-1]))
    return out


def rle_decode(runs: Sequence[int], width: int, height: int, instance_id: int = 0) -> InstanceMask:
    r = np.asarray(runs, dtype=np.int64)
    if r.ndim != 1 or r.size == 0:
        raise InputError("RLE must be a non-empty list of run lengths")
    if (r < 0).any():
        raise InputError("RLE run lengths must be non-negative")
    total = int(r.sum())
    if total != width * height:
        raise InputError(f"RLE length mismatch: runs sum to {total}, lattice has {width * height}")
    offsets = np.r_[0, np.cumsum(r)[:-1]]
    starts, lengths = offsets[1::2], r[1::2]
    n = int(lengths.sum())
    if n == 0:
        return InstanceMask(width, height, 0, 0, np.zeros((0, 0), bool), instance_id)
    base = np.repeat(starts - np.r_[0, np.cumsum(lengths)[:-1]], lengths)
    flat = base + np.arange(n)
    return InstanceMask.from_flat_indices(flat, width, height, instance_id)


# ---------------------------------------------------------------------------
# Non-maximum suppression
# ---------------------------------------------------------------------------

def nms_keep(masks: Sequence[InstanceMask], scores: Sequence[float], tau_nms: float) -> list[int]:
    """Indices kept by greedy mask NMS, in input order."""
    if not (0.0 < tau_nms <= 1.0):
        raise InputError(f"NMS threshold must lie in (0, 1], got {tau_nms}")
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    ious = iou_matrix(list(masks), list(masks))
    kept: list[int] = []
    for i in order:
        if all(ious[i, k] <= tau_nms for k in kept):
            kept.append(int(i))
    return sorted(kept)


def nms(preds: PredictionSet, tau_nms: float) -> PredictionSet:
    masks = [as_mask(p.geometry, preds.width, preds.height) for p in preds.items]
    keep = nms_keep(masks, [p.confidence for p in preds.items], tau_nms)
    return PredictionSet(preds.image_id, preds.width, preds.height, [preds.items[i] for i in keep])
