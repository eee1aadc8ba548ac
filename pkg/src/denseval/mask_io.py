"""Reading and writing dataset artifacts, plus split statistics.

Supported inputs:

* label maps: single-channel 8- or 16-bit PNG, one instance id per pixel;
* polygon label files: ``class_id x1 y1 ... xn yn [conf]`` per line;
* prediction index: one JSON document with polygon or RLE items per image;
* dataset manifest: JSON mapping split name to (image, label map) pairs.
"""
from __future__ import annotations

import json
import logging
import os
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from . import schemas
from .exceptions import FormatError, InputError, ParseError
from .geometry import rle_decode, rle_encode
from .structures import (AnnotationSet, InstanceMask, LabelMap, Polygon, Prediction,
                         PredictionSet, ensure_same_lattice)

log = logging.getLogger(__name__)

COORD_DECIMALS = 6
_EIGHT = np.ones((3, 3), dtype=bool)


# ---------------------------------------------------------------------------
# Label maps
# ---------------------------------------------------------------------------

def load_label_map(path: str | os.PathLike) -> LabelMap:
    """Read a grayscale PNG label map without altering pixel values."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt, mode = im.format, im.mode
            if fmt != "PNG":
                raise FormatError(f"{path}: label map must be a PNG file, got {fmt}")
            if mode not in ("L", "I;16", "I;16B", "I;16L", "I"):
                raise FormatError(
                    f"{path}: label map must be single-channel 8/16-bit grayscale, got mode {mode!r} "
                    f"({len(im.getbands())} channel(s))")
            values = np.array(im)
    except (OSError, UnidentifiedImageError) as exc:
        raise FormatError(f"{path}: cannot read label map ({exc})") from exc
    if mode == "I" and values.size and (values.min() < 0 or values.max() > 65535):
        raise FormatError(f"{path}: label values exceed the 16-bit range")
    if mode == "I":
        values = values.astype(np.uint16)
    return LabelMap(values, image_id=path.stem)


def save_label_map(label_map: LabelMap | np.ndarray, path: str | os.PathLike) -> None:
    """Write 8-bit when ids fit, 16-bit otherwise."""
    values = label_map.values if isinstance(label_map, LabelMap) else np.asarray(label_map)
    if values.size and values.max() > 65535:
        raise InputError("instance ids above 65535 cannot be stored in a PNG label map")
    dtype = np.uint8 if values.max(initial=0) <= 255 else np.uint16
    Image.fromarray(values.astype(dtype)).save(path, format="PNG")


def _largest_component(crop: np.ndarray) -> tuple[np.ndarray, int]:
    labels, n = ndimage.label(crop, structure=_EIGHT)
    if n <= 1:
        return crop, 0
    sizes = np.bincount(labels.ravel())[1:]
    boxes = ndimage.find_objects(labels)
    # largest area, then smaller y_min, then smaller x_min
    best = min(range(n), key=lambda k: (-sizes[k], boxes[k][0].start, boxes[k][1].start))
    keep = labels == best + 1
    return keep, int(sizes.sum() - sizes[best])


def extract_instances(label_map: LabelMap, keep_largest: bool = True) -> list[InstanceMask]:
    """One mask per non-zero id, ordered by id.

    An id split into several 8-connected components keeps only its largest
    component; the discarded pixel count is stored on ``dropped_pixels``.
    """
    v = label_map.values
    if not v.any():
        return []
    slices = ndimage.find_objects(v.astype(np.intp, copy=False))
    out = []
    for idx, sl in enumerate(slices):
        if sl is None:
            continue
        inst_id = idx + 1
        crop = v[sl] == inst_id
        dropped = 0
        if keep_largest:
            crop, dropped = _largest_component(crop)
            if dropped:
                log.warning("image %s: instance %d has several components, dropped %d pixel(s)",
                            label_map.image_id or "?", inst_id, dropped)
        out.append(InstanceMask(label_map.width, label_map.height, sl[1].start, sl[0].start,
                                crop, inst_id, dropped))
    return out


def annotations_from_label_map(label_map: LabelMap) -> AnnotationSet:
    return AnnotationSet(label_map.image_id, label_map.width, label_map.height,
                         extract_instances(label_map))


# ---------------------------------------------------------------------------
# Polygon label files
# ---------------------------------------------------------------------------

def parse_polygon_labels(text: str, width: int, height: int, expect_confidence: bool = False,
                         image_id: str = "", source: str | None = None):
    """Parse label-file content into an AnnotationSet (or PredictionSet with confidences)."""
    polygons = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            class_id = int(fields[0])
            values = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", lineno, source) from None
        if not all(np.isfinite(values)):
            raise ParseError("non-finite value", lineno, source)
        conf = None
        if expect_confidence:
            if len(values) % 2 == 0:
                raise ParseError("missing confidence (expected a trailing score)", lineno, source)
            conf = values.pop()
            if not 0.0 <= conf <= 1.0:
                raise ParseError(f"confidence {conf} outside [0, 1]", lineno, source)
        elif len(values) % 2:
            raise ParseError(f"odd coordinate count ({len(values)})", lineno, source)
        if len(values) < 6:
            raise ParseError(f"polygon needs at least 3 vertices, got {len(values) // 2}",
                             lineno, source)
        if min(values) < 0.0 or max(values) > 1.0:
            raise ParseError("coordinate outside [0, 1]", lineno, source)
        polygons.append(Polygon(np.array(values).reshape(-1, 2), class_id, conf))
    if expect_confidence:
        return PredictionSet(image_id, width, height, [Prediction(p, p.confidence) for p in polygons])
    return AnnotationSet(image_id, width, height, polygons)


def load_polygon_labels(path: str | os.PathLike, width: int, height: int,
                        expect_confidence: bool = False):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read label file ({exc})") from exc
    return parse_polygon_labels(text, width, height, expect_confidence, path.stem, str(path))


def _fmt(value: float) -> str:
    return f"{value:.{COORD_DECIMALS}f}"


def write_polygon_labels(labels: AnnotationSet | PredictionSet) -> str:
    """Serialize to label-file content. Prediction sets get a trailing confidence."""
    if isinstance(labels, PredictionSet):
        entries = [(p.geometry, p.confidence) for p in labels.items]
    else:
        entries = [(g, None) for g in labels.instances]
    lines = []
    for geom, conf in entries:
        if not isinstance(geom, Polygon):
            raise InputError(f"cannot write {type(geom).__name__} as a polygon label "
                             "(no polygon attached)")
        fields = [str(int(geom.class_id))] + [_fmt(v) for v in geom.vertices.ravel()]
        if conf is not None:
            fields.append(_fmt(conf))
        lines.append(" ".join(fields) + "\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# Prediction index
# ---------------------------------------------------------------------------

def parse_prediction_index(doc: dict) -> list[PredictionSet]:
    try:
        jsonschema.validate(doc, schemas.PREDICTION_INDEX)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise FormatError(f"prediction index violates schema at {where}: {exc.message}") from None
    out, seen = [], set()
    for img in doc["images"]:
        image_id, w, h = img["image_id"], img["width"], img["height"]
        if image_id in seen:
            raise FormatError(f"duplicate image_id {image_id!r} in prediction index")
        seen.add(image_id)
        items = []
        for k, item in enumerate(img["items"]):
            conf = float(item["confidence"])
            if not 0.0 <= conf <= 1.0:
                raise FormatError(f"image {image_id!r} item {k}: confidence {conf} outside [0, 1]")
            try:
                if "rle" in item:
                    geom = rle_decode(item["rle"], w, h)
                else:
                    coords = item["polygon"]
                    if len(coords) % 2 or len(coords) < 6:
                        raise InputError("polygon needs an even number (>= 6) of coordinates")
                    geom = Polygon(np.asarray(coords, dtype=float).reshape(-1, 2), 0, conf)
            except InputError as exc:
                raise FormatError(f"image {image_id!r} item {k}: {exc}") from None
            items.append(Prediction(geom, conf))
        out.append(PredictionSet(image_id, w, h, items))
    return out


def load_prediction_index(path: str | os.PathLike) -> list[PredictionSet]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot read prediction index ({exc})") from exc
    return parse_prediction_index(doc)


def dump_prediction_index(sets: Iterable[PredictionSet]) -> dict:
    images = []
    for ps in sets:
        items = []
        for p in ps.items:
            if isinstance(p.geometry, InstanceMask):
                items.append({"confidence": round(p.confidence, 6), "rle": rle_encode(p.geometry)})
            else:
                coords = [round(float(c), COORD_DECIMALS) for c in p.geometry.vertices.ravel()]
                items.append({"confidence": round(p.confidence, 6), "polygon": coords})
        images.append({"image_id": ps.image_id, "width": ps.width, "height": ps.height,
                       "items": items})
    return {"images": images}


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path | None
    label_path: Path


def load_manifest(path: str | os.PathLike) -> dict[str, list[ManifestEntry]]:
    """Split name -> entries, in manifest order. Relative paths resolve against the manifest."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot read manifest ({exc})") from exc
    try:
        jsonschema.validate(doc, schemas.MANIFEST)
    except jsonschema.ValidationError as exc:
        raise FormatError(f"{path}: manifest violates schema: {exc.message}") from None
    base = path.parent
    splits = {}
    for split, pairs in doc.items():
        entries = []
        for pair in pairs:
            if isinstance(pair, dict):
                image, label = pair.get("image"), pair["label"]
            else:
                image, label = pair
            label_path = base / label
            entries.append(ManifestEntry(label_path.stem, base / image if image else None,
                                         label_path))
        splits[split] = entries
    return splits


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    split: str
    image_count: int
    total_instances: int
    mean_instances: float
    median_instances: float
    min_instances: int
    max_instances: int
    coverage: float

    def as_dict(self) -> dict:
        return asdict(self)


def compute_coverage(maps: Sequence[LabelMap]) -> float:
    """Percentage of pixels belonging to any instance, pooled over all maps."""
    if not maps:
        raise InputError("coverage of an empty list of label maps is undefined")
    ensure_same_lattice(maps)
    fg = sum(m.foreground_pixels() for m in maps)
    return 100.0 * fg / (len(maps) * maps[0].width * maps[0].height)


def stats_from_counts(split: str, counts: Sequence[int], foreground: int,
                      lattice_pixels: int) -> DatasetStats:
    """Assemble split statistics from per-image instance counts and pooled pixel totals."""
    if not counts:
        raise InputError(f"split {split!r} has no images; statistics are undefined")
    total = sum(counts)
    return DatasetStats(split, len(counts), total, total / len(counts),
                        float(statistics.median(counts)), min(counts), max(counts),
                        100.0 * foreground / lattice_pixels)


def compute_split_stats(maps: Sequence[LabelMap], split: str) -> DatasetStats:
    if not maps:
        raise InputError(f"split {split!r} has no images; statistics are undefined")
    ensure_same_lattice(maps)
    counts = [len(extract_instances(m)) for m in maps]
    return stats_from_counts(split, counts, sum(m.foreground_pixels() for m in maps),
                             len(maps) * maps[0].width * maps[0].height)
