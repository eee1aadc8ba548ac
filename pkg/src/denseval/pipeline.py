"""End-to-end runs behind the CLI subcommands.

Every ``run_*`` function takes a RunConfig, writes its outputs to
``config.out_dir`` and returns ``(bundle, warnings)``. Per-image work fans out
over a thread pool; all reductions happen afterwards in manifest order, so the
outputs do not depend on the degree of parallelism.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, schemas
from .config import RunConfig
from .error_analysis import ErrorBreakdown, categorize_errors, load_luminance
from .exceptions import InputError
from .geometry import (as_mask, mask_iou, nms, normalize_polygon, simplify_polygon,
                       trace_external_contour)
from .mask_io import (DatasetStats, ManifestEntry, annotations_from_label_map, load_label_map,
                      load_manifest, load_prediction_index, parse_polygon_labels,
                      stats_from_counts, write_polygon_labels)
from .matching import (ComputeProfile, Scene, average_precision, dataset_metrics,
                       efficiency_metrics, match_scene, prepare_scene, prf)
from .report import bundle, csv_text, file_digest, pct, svg_line_chart, write_csv, write_json
from .structures import AnnotationSet, PredictionSet
from .sweeps import (CONFIDENCE_AXIS, confidence_sweep, degradation_stats, iou_sweep,
                     select_threshold)
from .synth import generate_dataset

log = logging.getLogger(__name__)


def _map(fn, items, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value, key: str):
    if not value:
        raise InputError(f"config key {key!r} is required for this command")
    return value


def _entries(cfg: RunConfig) -> tuple[list[tuple[str, ManifestEntry]], Path]:
    manifest = Path(_require(cfg.manifest, "manifest"))
    splits = load_manifest(manifest)
    if cfg.split is not None:
        if cfg.split not in splits:
            raise InputError(f"split {cfg.split!r} not in manifest (have {list(splits)})")
        splits = {cfg.split: splits[cfg.split]}
    return [(s, e) for s, es in splits.items() for e in es], manifest


def _digests(cfg: RunConfig, manifest: Path, entries, images: bool = False) -> dict:
    base = manifest.parent
    out = {"manifest": file_digest(manifest)}
    for _, e in entries:
        out[os.path.relpath(e.label_path, base)] = file_digest(e.label_path)
        if images and e.image_path is not None:
            out[os.path.relpath(e.image_path, base)] = file_digest(e.image_path)
    if cfg.predictions:
        out["predictions"] = file_digest(cfg.predictions)
    if cfg.profile:
        out["profile"] = file_digest(cfg.profile)
    return out


# ---------------------------------------------------------------------------
# Shared loading
# ---------------------------------------------------------------------------

@dataclass
class ImageData:
    split: str
    entry: ManifestEntry
    gts: AnnotationSet
    preds: PredictionSet
    scene: Scene
    foreground: int
    dropped_pixels: int
    missing_predictions: bool


@dataclass
class Loaded:
    images: list
    manifest: Path
    entries: list
    warnings: list


def load_for_evaluation(cfg: RunConfig) -> Loaded:
    entries, manifest = _entries(cfg)
    pred_sets = load_prediction_index(_require(cfg.predictions, "predictions"))
    by_id = {p.image_id: p for p in pred_sets}
    gt_ids = [e.image_id for _, e in entries]
    if len(set(gt_ids)) != len(gt_ids):
        raise InputError("manifest lists the same image id more than once")
    orphans = sorted(set(by_id) - set(gt_ids))
    if orphans:
        raise InputError(f"predictions reference images absent from the ground truth: "
                         f"{', '.join(orphans)}")
    warnings = []
    missing = [i for i in gt_ids if i not in by_id]
    if missing:
        warnings.append(f"{len(missing)} image(s) have no predictions and count as empty: "
                        f"{', '.join(missing[:10])}{' ...' if len(missing) > 10 else ''}")

    def one(item):
        split, entry = item
        lm = load_label_map(entry.label_path)
        gts = annotations_from_label_map(lm)
        preds = by_id.get(entry.image_id) or PredictionSet(entry.image_id, lm.width, lm.height)
        if (preds.width, preds.height) != (lm.width, lm.height):
            raise InputError(f"image {entry.image_id!r}: predictions are {preds.width}x"
                             f"{preds.height}, label map is {lm.width}x{lm.height}")
        if cfg.nms:
            preds = nms(preds, cfg.tau_nms)
        return ImageData(split, entry, gts, preds, prepare_scene(preds, gts),
                         lm.foreground_pixels(), sum(m.dropped_pixels for m in gts.instances),
                         entry.image_id not in by_id)

    images = _map(one, entries, cfg.threads)
    dropped = sum(d.scene.dropped_predictions for d in images)
    if dropped:
        warnings.append(f"{dropped} prediction(s) rasterized to empty masks and were ignored")
    split_px = sum(d.dropped_pixels for d in images)
    if split_px:
        warnings.append(f"{split_px} ground-truth pixel(s) dropped from multi-component instances")
    return Loaded(images, manifest, entries, warnings)


def _split_stats(images: list[ImageData]) -> list[DatasetStats]:
    order, groups = [], {}
    for d in images:
        if d.split not in groups:
            order.append(d.split)
            groups[d.split] = []
        groups[d.split].append(d)
    out = []
    for s in order:
        g = groups[s]
        out.append(stats_from_counts(s, [len(d.gts.instances) for d in g],
                                     sum(d.foreground for d in g),
                                     sum(d.gts.width * d.gts.height for d in g)))
    return out


def _stats_dict(st: DatasetStats) -> dict:
    return {"split": st.split, "images": st.image_count, "total_instances": st.total_instances,
            "mean_instances": round(st.mean_instances, 1),
            "median_instances": round(st.median_instances, 1),
            "min_instances": st.min_instances, "max_instances": st.max_instances,
            "coverage_pct": round(st.coverage, 1)}


def _finish(cfg: RunConfig, name: str, doc: dict, warnings: list) -> tuple[dict, list]:
    doc["diagnostics"] = dict(doc.get("diagnostics", {}), warnings=list(warnings))
    write_json(_out_dir(cfg) / name, doc)
    for w in warnings:
        log.warning(w)
    return doc, warnings


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def run_evaluate(cfg: RunConfig) -> tuple[dict, list]:
    data = load_for_evaluation(cfg)
    scenes = [d.scene for d in data.images]
    outcomes = [match_scene(s, cfg.tau, cfg.theta) for s in scenes]
    ap50 = average_precision(scenes, 0.5) if sum(s.n_gt for s in scenes) else None
    report = dataset_metrics(outcomes, cfg.theta, cfg.empty_policy, ap50)

    eff = None
    if cfg.profile:
        profile = ComputeProfile.load(cfg.profile)
        eff = efficiency_metrics(report, profile).to_dict()

    out = _out_dir(cfg)
    per_image = []
    for d, o in zip(data.images, outcomes):
        p, r, f = prf(o.tp, o.fp, o.fn)
        per_image.append((d.entry.image_id, o.tp, o.fp, o.fn, pct(p), pct(r), pct(f)))
    write_csv(out / "per_image.csv", ["image_id", "tp", "fp", "fn", "precision", "recall", "f1"],
              per_image)
    metrics = report.to_dict()
    write_csv(out / "metrics.csv", list(metrics), [list(metrics.values())])

    doc = bundle("evaluate", cfg.echo(), _digests(cfg, data.manifest, data.entries),
                 metrics=metrics, dataset_stats=[_stats_dict(s) for s in _split_stats(data.images)],
                 efficiency=eff,
                 diagnostics={"images": len(data.images),
                              "empty_predictions_dropped": sum(s.dropped_predictions
                                                               for s in scenes),
                              "gt_pixels_dropped": sum(d.dropped_pixels for d in data.images),
                              "images_without_predictions": sum(d.missing_predictions
                                                                for d in data.images)})
    return _finish(cfg, "report.json", doc, data.warnings)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _curve_rows(curve) -> list:
    return [(round(t, 4), r.tp, r.fp, r.fn, pct(r.precision), pct(r.recall), pct(r.f1),
             pct(r.mean_image_f1)) for t, r in curve.points]


def run_sweep(cfg: RunConfig) -> tuple[dict, list]:
    data = load_for_evaluation(cfg)
    scenes = [d.scene for d in data.images]
    warnings = list(data.warnings)
    if cfg.axis == "iou":
        curve = iou_sweep(thresholds=cfg.iou_grid, theta=cfg.theta, scenes=scenes,
                          empty_policy=cfg.empty_policy, threads=cfg.threads)
        ref, ref_label, x_label = cfg.tau, f"IoU = {cfg.tau:g}", "IoU matching threshold"
        rises = curve.increases()
        if rises:
            warnings.append(f"F1 increased with the IoU threshold between {rises}")
    else:
        curve = confidence_sweep(thetas=cfg.conf_grid, tau=cfg.tau, scenes=scenes,
                                 empty_policy=cfg.empty_policy, threads=cfg.threads)
        ref, ref_label, x_label = cfg.theta, f"conf = {cfg.theta:g}", "Confidence threshold"

    out = _out_dir(cfg)
    stem = f"sweep_{cfg.axis}"
    write_csv(out / f"{stem}.csv", schemas.SWEEP_COLUMNS, _curve_rows(curve))
    title = ("F1 vs IoU matching threshold" if curve.axis != CONFIDENCE_AXIS
             else f"F1 vs confidence threshold (IoU = {cfg.tau:g})")
    (out / f"{stem}.svg").write_text(svg_line_chart(
        curve.thresholds, [100.0 * f for f in curve.f1], title=title, x_label=x_label,
        reference_x=ref, reference_label=ref_label))

    sel = select_threshold(curve)
    ts = curve.thresholds
    doc = bundle("sweep", cfg.echo(), _digests(cfg, data.manifest, data.entries), curve={
        "axis": curve.axis,
        "points": [dict(zip(schemas.SWEEP_COLUMNS, row)) for row in _curve_rows(curve)],
        "selected": {"threshold": sel.value, "f1": pct(sel.objective)},
        "degradation": {"from": ts[0], "to": ts[-1],
                        "delta_f1_points": degradation_stats(curve, ts[0], ts[-1])},
    })
    return _finish(cfg, f"{stem}.json", doc, warnings)


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

def run_errors(cfg: RunConfig) -> tuple[dict, list]:
    rules = cfg.error_rules()
    data = load_for_evaluation(cfg)
    if rules.contrast_cutoff is not None:
        missing = [str(d.entry.image_path or f"<no image for {d.entry.image_id}>")
                   for d in data.images
                   if d.entry.image_path is None or not Path(d.entry.image_path).is_file()]
        if missing:
            raise InputError("the contrast rule needs images; missing: " + ", ".join(missing))

    def one(d: ImageData) -> ErrorBreakdown:
        img = load_luminance(d.entry.image_path) if rules.contrast_cutoff is not None else None
        outcome = match_scene(d.scene, cfg.tau, cfg.theta)
        return categorize_errors(outcome, d.gts, d.preds, img, rules)

    parts = _map(one, data.images, cfg.threads)
    br = ErrorBreakdown.combine(parts, rules.precedence)
    out = _out_dir(cfg)
    write_csv(out / "error_breakdown.csv", schemas.BREAKDOWN_COLUMNS, br.rows())
    params = {k: getattr(rules, k) for k in ("boundary_margin", "contrast_cutoff",
                                              "contrast_pad", "clutter_radius",
                                              "occlusion_radius", "occlusion_min")}
    write_json(out / "error_details.json", {"precedence": list(br.precedence),
                                            "parameters": params,
                                            "records": [r.to_dict() for r in br.records]})
    summary = {"tau": cfg.tau, "theta": cfg.theta, "precedence": list(br.precedence),
               "counts": br.counts, "totals": {k: br.total(k) for k in ("fp", "fn")},
               "percent_of_total": {k: br.percentages(k) for k in ("fp", "fn")}}
    doc = bundle("errors", cfg.echo(), _digests(cfg, data.manifest, data.entries,
                                                images=rules.contrast_cutoff is not None),
                 errors=summary)
    return _finish(cfg, "errors_report.json", doc, data.warnings)


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def run_stats(cfg: RunConfig) -> tuple[dict, list]:
    manifest = Path(_require(cfg.manifest, "manifest"))
    splits = load_manifest(manifest)
    if cfg.split is not None:
        if cfg.split not in splits:
            raise InputError(f"split {cfg.split!r} not in manifest (have {list(splits)})")
        splits = {cfg.split: splits[cfg.split]}
    warnings, rows, stats = [], [], []

    def one(entry: ManifestEntry):
        lm = load_label_map(entry.label_path)
        return len(annotations_from_label_map(lm).instances), lm.foreground_pixels(), \
            lm.width * lm.height, (lm.width, lm.height)

    for split, entries in splits.items():
        if not entries:
            msg = f"split {split!r} has no images; statistics are undefined"
            warnings.append(msg)
            rows.append([split] + [None] * 7 + [msg])
            continue
        res = _map(one, entries, cfg.threads)
        if len({r[3] for r in res}) > 1:
            raise InputError(f"split {split!r} mixes image sizes; coverage needs one lattice")
        st = stats_from_counts(split, [r[0] for r in res], sum(r[1] for r in res),
                               sum(r[2] for r in res))
        d = _stats_dict(st)
        stats.append(d)
        rows.append(list(d.values()) + [None])
    write_csv(_out_dir(cfg) / "dataset_stats.csv", schemas.STATS_COLUMNS, rows)
    entries = [(s, e) for s, es in splits.items() for e in es]
    doc = bundle("stats", cfg.echo(), _digests(cfg, manifest, entries), dataset_stats=stats)
    return _finish(cfg, "stats_report.json", doc, warnings)


# ---------------------------------------------------------------------------
# convert
# ---------------------------------------------------------------------------

def convert_label_map(lm, alpha: float, class_id: int = 0) -> tuple[str, dict]:
    """Label map -> polygon label-file content plus a per-image conversion summary."""
    gts = annotations_from_label_map(lm)
    polys, skipped, fallbacks, masks = [], [], 0, []
    for m in gts.instances:
        simple = simplify_polygon(trace_external_contour(m), alpha)
        fallbacks += simple.fallback
        if simple.degenerate:
            skipped.append(m.instance_id)
            continue
        polys.append(normalize_polygon(simple, lm.width, lm.height, class_id))
        masks.append(m)
    text = write_polygon_labels(AnnotationSet(lm.image_id, lm.width, lm.height, polys))
    reread = parse_polygon_labels(text, lm.width, lm.height)
    ious = [mask_iou(as_mask(p, lm.width, lm.height), m) for p, m in zip(reread.instances, masks)]
    summary = {"image_id": lm.image_id, "instances": len(gts.instances), "written": len(polys),
               "skipped_degenerate": skipped, "simplification_fallbacks": int(fallbacks),
               "dropped_pixels": sum(m.dropped_pixels for m in gts.instances), "ious": ious}
    return text, summary


def run_convert(cfg: RunConfig) -> tuple[dict, list]:
    entries, manifest = _entries(cfg)
    out = _out_dir(cfg)
    (out / "labels").mkdir(exist_ok=True)

    def one(item):
        _, entry = item
        text, summary = convert_label_map(load_label_map(entry.label_path), cfg.alpha,
                                          cfg.class_id)
        (out / "labels" / f"{entry.image_id}.txt").write_text(text)
        return summary

    summaries = _map(one, entries, cfg.threads)
    rows, all_ious = [], []
    for s in summaries:
        ious = s.pop("ious")
        all_ious += ious
        s["mean_iou"] = round(float(np.mean(ious)), 4) if ious else None
        s["min_iou"] = round(float(np.min(ious)), 4) if ious else None
        rows.append((s["image_id"], s["instances"], s["written"], len(s["skipped_degenerate"]),
                     s["simplification_fallbacks"], s["dropped_pixels"], s["mean_iou"],
                     s["min_iou"]))
    write_csv(out / "conversion.csv", ["image_id", "instances", "written", "skipped_degenerate",
                                        "simplification_fallbacks", "dropped_pixels", "mean_iou",
                                        "min_iou"], rows)
    warnings = []
    n_skip = sum(len(s["skipped_degenerate"]) for s in summaries)
    if n_skip:
        warnings.append(f"{n_skip} degenerate instance(s) skipped")
    dropped = sum(s["dropped_pixels"] for s in summaries)
    if dropped:
        warnings.append(f"{dropped} pixel(s) dropped from multi-component instances")
    iou_summary = None
    if all_ious:
        a = np.array(all_ious)
        iou_summary = {"instances": int(a.size), "mean": round(float(a.mean()), 4),
                       "min": round(float(a.min()), 4),
                       "fraction_ge_0_95": round(float((a >= 0.95).mean()), 4)}
    doc = bundle("convert", cfg.echo(), _digests(cfg, manifest, entries),
                 conversion={"images": summaries, "round_trip_iou": iou_summary,
                             "instances": sum(s["instances"] for s in summaries),
                             "written": sum(s["written"] for s in summaries)})
    return _finish(cfg, "conversion_report.json", doc, warnings)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def run_synth(cfg: RunConfig) -> tuple[dict, list]:
    summary = generate_dataset(
        _out_dir(cfg), seed=cfg.seed, images=cfg.synth_images, instances=cfg.synth_instances,
        width=cfg.synth_width, height=cfg.synth_height, profile=cfg.synth_profile,
        dropout=cfg.synth_dropout, iou_low=cfg.synth_iou_low, iou_high=cfg.synth_iou_high,
        min_diameter=cfg.synth_min_diameter, max_diameter=cfg.synth_max_diameter,
        false_positives=cfg.synth_false_positives, split=cfg.split or "test")
    return {"toolkit": "denseval", "version": __version__, "command": "synth",
            "synth": summary}, []


COMMANDS = {
    "convert": run_convert,
    "evaluate": run_evaluate,
    "sweep": run_sweep,
    "stats": run_stats,
    "errors": run_errors,
    "synth": run_synth,
}
