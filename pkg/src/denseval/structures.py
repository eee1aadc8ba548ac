"""Core data containers shared by the I/O, geometry and evaluation modules.

Pixel convention used throughout: pixel ``(col, row)`` has its centre at the
continuous coordinate ``(col, row)``. Contours are chains of pixel centres and
normalized polygon coordinates are ``x / W`` and ``y / H`` of those centres.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from .exceptions import GeometryError, InputError


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel instance-id raster; 0 is background."""

    values: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InputError(f"label map must be a non-empty 2-D raster, got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.integer) or (v.size and v.min() < 0):
            raise InputError("label map values must be unsigned integers")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    def ids(self) -> set[int]:
        u = np.unique(self.values)
        return {int(i) for i in u if i != 0}

    def foreground_pixels(self) -> int:
        return int(np.count_nonzero(self.values))


class InstanceMask:
    """Binary mask on a ``width x height`` lattice, stored as a tight crop.

    Only the bounding-box crop is kept in memory, so pairwise IoU on dense
    scenes touches just the overlapping windows.
    """

    def __init__(self, width: int, height: int, x0: int, y0: int, crop: np.ndarray,
                 instance_id: int = 0, dropped_pixels: int = 0):
        crop = np.asarray(crop, dtype=bool)
        if crop.ndim != 2:
            raise GeometryError("mask crop must be 2-D")
        if x0 < 0 or y0 < 0 or x0 + crop.shape[1] > width or y0 + crop.shape[0] > height:
            raise GeometryError("mask crop exceeds its lattice")
        rows = np.flatnonzero(crop.any(axis=1))
        if rows.size:
            cols = np.flatnonzero(crop.any(axis=0))
            r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
            crop = crop[r0:r1, c0:c1]
            x0, y0 = x0 + int(c0), y0 + int(r0)
        else:
            crop = np.zeros((0, 0), dtype=bool)
            x0 = y0 = 0
        self.width = int(width)
        self.height = int(height)
        self.x0 = int(x0)
        self.y0 = int(y0)
        self.crop = crop
        self.instance_id = int(instance_id)
        self.dropped_pixels = int(dropped_pixels)

    @classmethod
    def from_full(cls, bits: np.ndarray, instance_id: int = 0) -> "InstanceMask":
        bits = np.asarray(bits, dtype=bool)
        return cls(bits.shape[1], bits.shape[0], 0, 0, bits, instance_id)

    @classmethod
    def from_flat_indices(cls, flat: np.ndarray, width: int, height: int,
                          instance_id: int = 0) -> "InstanceMask":
        """Build from row-major indices of set pixels."""
        flat = np.asarray(flat, dtype=np.int64)
        if flat.size == 0:
            return cls(width, height, 0, 0, np.zeros((0, 0), bool), instance_id)
        ys, xs = np.divmod(flat, width)
        x0, y0 = int(xs.min()), int(ys.min())
        crop = np.zeros((int(ys.max()) - y0 + 1, int(xs.max()) - x0 + 1), dtype=bool)
        crop[ys - y0, xs - x0] = True
        return cls(width, height, x0, y0, crop, instance_id)

    def to_full(self) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        h, w = self.crop.shape
        out[self.y0:self.y0 + h, self.x0:self.x0 + w] = self.crop
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @cached_property
    def pixel_count(self) -> int:
        return int(np.count_nonzero(self.crop))

    @property
    def is_empty(self) -> bool:
        return self.pixel_count == 0

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive ``(x_min, y_min, x_max, y_max)``."""
        if self.is_empty:
            raise GeometryError("empty mask has no bounding box")
        h, w = self.crop.shape
        return (self.x0, self.y0, self.x0 + w - 1, self.y0 + h - 1)

    @cached_property
    def centroid(self) -> tuple[float, float]:
        if self.is_empty:
            raise GeometryError("empty mask has no centroid")
        ys, xs = np.nonzero(self.crop)
        return (float(xs.mean()) + self.x0, float(ys.mean()) + self.y0)

    def flat_indices(self) -> np.ndarray:
        """Sorted row-major indices of set pixels on the full lattice."""
        ys, xs = np.nonzero(self.crop)
        return (ys.astype(np.int64) + self.y0) * self.width + xs + self.x0

    def same_pixels(self, other: "InstanceMask") -> bool:
        return (self.shape == other.shape and self.x0 == other.x0 and self.y0 == other.y0
                and np.array_equal(self.crop, other.crop))

    def __repr__(self) -> str:
        return (f"InstanceMask(id={self.instance_id}, lattice={self.width}x{self.height}, "
                f"pixels={self.pixel_count})")


@dataclass(eq=False)
class Contour:
    """Closed chain of pixel-centre vertices (last vertex connects to the first)."""

    vertices: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 1:
            raise GeometryError("contour needs at least one (x, y) vertex")
        self.vertices = v

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def degenerate(self) -> bool:
        return len(self.vertices) < 3

    @property
    def perimeter(self) -> float:
        v = self.vertices.astype(float)
        if len(v) < 2:
            return 0.0
        d = np.roll(v, -1, axis=0) - v
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


@dataclass(eq=False)
class Polygon:
    """Normalized polygon in ``[0, 1]^2`` as written to label files."""

    vertices: np.ndarray
    class_id: int = 0
    confidence: float | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("polygon vertices must have shape (n, 2)")
        if len(v) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise GeometryError("normalized polygon coordinates must lie in [0, 1]")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise GeometryError(f"confidence {self.confidence} outside [0, 1]")
        self.vertices = v


Geometry = Union[Polygon, InstanceMask]


class Prediction(NamedTuple):
    geometry: Geometry
    confidence: float


@dataclass(eq=False)
class AnnotationSet:
    image_id: str
    width: int
    height: int
    instances: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.instances:
            _check_lattice(g, self.width, self.height)


@dataclass(eq=False)
class PredictionSet:
    image_id: str
    width: int
    height: int
    items: list = field(default_factory=list)

    def __post_init__(self):
        items = []
        for it in self.items:
            geom, conf = it
            if not 0.0 <= float(conf) <= 1.0:
                raise InputError(f"confidence {conf} outside [0, 1] in image {self.image_id!r}")
            _check_lattice(geom, self.width, self.height)
            items.append(Prediction(geom, float(conf)))
        self.items = items

    @property
    def confidences(self) -> np.ndarray:
        return np.array([p.confidence for p in self.items], dtype=float)

    def filter_confidence(self, theta: float) -> "PredictionSet":
        """Keep predictions with confidence >= theta, in input order."""
        return PredictionSet(self.image_id, self.width, self.height,
                             [p for p in self.items if p.confidence >= theta])


def _check_lattice(geom, width: int, height: int) -> None:
    if isinstance(geom, InstanceMask):
        if geom.shape != (height, width):
            raise GeometryError(
                f"mask lattice {geom.width}x{geom.height} differs from image {width}x{height}")
    elif not isinstance(geom, Polygon):
        raise InputError(f"unsupported geometry type {type(geom).__name__}")


def ensure_same_lattice(items: Sequence) -> None:
    shapes = {(o.width, o.height) for o in items}
    if len(shapes) > 1:
        raise GeometryError(f"inputs use different lattices: {sorted(shapes)}")
