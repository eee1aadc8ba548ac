"""Deterministic JSON, CSV and SVG emitters."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from . import __version__


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def bundle(command: str, config: dict, digests: dict, **sections) -> dict:
    out = {"toolkit": "denseval", "version": __version__, "command": command,
           "config": config, "digests": dict(sorted(digests.items()))}
    out.update({k: v for k, v in sections.items() if v is not None})
    return out


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else v for v in r])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(csv_text(header, rows))


def pct(x: float | None) -> float | None:
    return None if x is None else round(100.0 * x, 1)


def svg_line_chart(xs: Sequence[float], ys: Sequence[float], *, title: str, x_label: str,
                   y_label: str = "F1 (%)", reference_x: float | None = None,
                   reference_label: str = "", y_range: tuple[float, float] = (0.0, 100.0),
                   width: int = 640, height: int = 400) -> str:
    """Static line chart: axes, ticks, polyline with markers, optional dashed vertical line."""
    left, right, top, bottom = 64, 24, 40, 56
    pw, ph = width - left - right, height - top - bottom
    x_lo, x_hi = min(xs), max(xs)
    if reference_x is not None:
        x_lo, x_hi = min(x_lo, reference_x), max(x_hi, reference_x)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.05, x_hi + 0.05
    y_lo, y_hi = y_range

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for k in range(6):
        yv = y_lo + k * (y_hi - y_lo) / 5
        parts.append(f'<line x1="{left - 4}" y1="{sy(yv):.2f}" x2="{left}" y2="{sy(yv):.2f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{sy(yv) + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{yv:g}</text>')
    for xv in xs:
        parts.append(f'<line x1="{sx(xv):.2f}" y1="{top + ph}" x2="{sx(xv):.2f}" '
                     f'y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(xv):.2f}" y="{top + ph + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{xv:g}</text>')
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{escape(x_label)}</text>')
    parts.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(y_label)}</text>')
    if reference_x is not None:
        rx = sx(reference_x)
        parts.append(f'<line class="reference" x1="{rx:.2f}" y1="{top}" x2="{rx:.2f}" '
                     f'y2="{top + ph}" stroke="gray" stroke-dasharray="6,4"/>')
        if reference_label:
            parts.append(f'<text x="{rx + 4:.2f}" y="{top + 12}" font-family="sans-serif" '
                         f'font-size="11" fill="gray">{escape(reference_label)}</text>')
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="#1f77b4" '
                 f'stroke-width="2"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#1f77b4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
