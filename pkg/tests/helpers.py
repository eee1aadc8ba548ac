"""Independent reference implementations used as test oracles.

These are deliberately naive (pure Python, no shared code with the package) so
that agreement with the optimized implementations is meaningful.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from denseval.structures import InstanceMask


def components_8(bits) -> list[set[tuple[int, int]]]:
    """8-connected components of a boolean raster as sets of (row, col), by BFS."""
    h, w = len(bits), len(bits[0]) if len(bits) else 0
    seen, comps = set(), []
    for r in range(h):
        for c in range(w):
            if not bits[r][c] or (r, c) in seen:
                continue
            comp, queue = set(), deque([(r, c)])
            seen.add((r, c))
            while queue:
                y, x = queue.popleft()
                comp.add((y, x))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and bits[ny][nx] and (ny, nx) not in seen:
                            seen.add((ny, nx))
                            queue.append((ny, nx))
            comps.append(comp)
    return comps


def pixel_set(mask: InstanceMask) -> set[tuple[int, int]]:
    full = mask.to_full()
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(full))}


def iou_sets(a: set, b: set) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def max_matching_size(adj: list[list[bool]]) -> int:
    """Maximum bipartite matching cardinality by exhaustive search (small inputs only)."""
    n_rows = len(adj)
    n_cols = len(adj[0]) if n_rows else 0

    def best(i: int, used: frozenset) -> int:
        if i == n_rows:
            return 0
        out = best(i + 1, used)
        for j in range(n_cols):
            if adj[i][j] and j not in used:
                out = max(out, 1 + best(i + 1, used | {j}))
        return out

    return best(0, frozenset())


def greedy_reference(iou: list[list[float]], scores: list[float], tau: float) -> list[tuple[int, int]]:
    """Plain-loop greedy matching: descending score, best unmatched IoU >= tau, low index ties."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    taken, pairs = set(), []
    for i in order:
        best_j, best_v = None, -1.0
        for j, v in enumerate(iou[i]):
            if j not in taken and v >= tau and v > best_v:
                best_j, best_v = j, v
        if best_j is not None:
            taken.add(best_j)
            pairs.append((i, best_j))
    return pairs


def seg_dist(p, a, b) -> float:
    """Scalar point-to-segment distance."""
    px, py = p
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / L2))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def dist_to_closed_chain(p, chain) -> float:
    n = len(chain)
    if n == 1:
        return math.hypot(p[0] - chain[0][0], p[1] - chain[0][1])
    return min(seg_dist(p, chain[k], chain[(k + 1) % n]) for k in range(n))


def rle_reference(bits) -> list[int]:
    """Row-major alternating runs starting with zeros."""
    flat = [int(v) for row in bits for v in row]
    runs, cur, n = [], 0, 0
    for v in flat:
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


def random_rect_mask(rng: np.random.Generator, width: int, height: int,
                     max_side: int | None = None) -> InstanceMask:
    max_side = max_side or max(width, height)
    w = int(rng.integers(1, min(width, max_side) + 1))
    h = int(rng.integers(1, min(height, max_side) + 1))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    full = np.zeros((height, width), bool)
    full[y:y + h, x:x + w] = True
    return InstanceMask.from_full(full)


def jitter_mask(rng: np.random.Generator, mask: InstanceMask, max_shift: int = 4) -> InstanceMask:
    """Shift a mask by a random offset, clipped to the lattice (may empty it)."""
    dx, dy = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
    full = mask.to_full()
    out = np.zeros_like(full)
    h, w = full.shape
    ys, xs = np.nonzero(full)
    ys, xs = ys + dy, xs + dx
    ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    out[ys[ok], xs[ok]] = True
    return InstanceMask.from_full(out)
