"""Slow brute-force references used to cross-check the fast paths.

Nothing here is used by the production code paths; each function recomputes
its answer from first principles with no shortcuts shared with the code it
checks.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .anchors import AnchorLattice, Assignment
from .geom import OBox, iou_hbb, iou_obb


def worst_case_iou_grid(anchor_size: float, stride: float, object_size: float,
                        step: float = 0.01, chunk: int = 512) -> float:
    """Min over object-centre offsets in one lattice cell of the best anchor IoU.

    Offsets are sampled on a ``step`` grid in both axes; every anchor close
    enough to overlap is enumerated per axis.
    """
    a, s, o = float(anchor_size), float(stride), float(object_size)
    n = max(1, int(round(s / step)))
    d = np.arange(n) * (s / n)
    reach = int(math.ceil((a + o) / s)) + 1
    centers = np.arange(-reach, reach + 2) * s
    lo = np.maximum(d[:, None] - o / 2, centers[None, :] - a / 2)
    hi = np.minimum(d[:, None] + o / 2, centers[None, :] + a / 2)
    overlap = np.clip(hi - lo, 0.0, None)
    best_axis = overlap.max(axis=1)
    denom = a * a + o * o
    worst = np.inf
    for start in range(0, n, chunk):
        inter = best_axis[start:start + chunk, None] * best_axis[None, :]
        worst = min(worst, float((inter / (denom - inter)).min()))
    return worst


def brute_force_assign(objects: Sequence[OBox], lattices: Sequence[AnchorLattice],
                       pos_threshold: float = 0.5, mode: str = "hbb") -> list[Assignment]:
    """Enumerate every anchor of every lattice for every object."""
    out = []
    for n, obj in enumerate(objects):
        best_iou, best = -1.0, None
        ob = obj.to_hbox()
        for lat in sorted(lattices, key=lambda lt: lt.level):
            for i in range(lat.feature_h):
                for j in range(lat.feature_w):
                    for k in range(lat.anchors_per_location):
                        anc = lat.anchor(i, j, k)
                        if mode == "hbb":
                            v = iou_hbb(ob, anc.to_hbox())
                        else:
                            v = iou_obb(obj, anc)
                        if v > best_iou:
                            best_iou, best = v, (lat.level, (i, j, k))
        out.append(Assignment(n, best[0], best[1], best_iou, best_iou >= pos_threshold))
    return out


def naive_correlate(m, weights) -> np.ndarray:
    """Direct loop cross-correlation with replicate borders on (H, W, C) maps."""
    x = np.asarray(m, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    w = np.asarray(weights, dtype=float)
    r = w.shape[0] // 2
    h, wd, c = x.shape
    out = np.zeros_like(x)
    for ch in range(c):
        for i in range(h):
            for j in range(wd):
                acc = 0.0
                for u in range(-r, r + 1):
                    for v in range(-r, r + 1):
                        ii = min(max(i + u, 0), h - 1)
                        jj = min(max(j + v, 0), wd - 1)
                        acc += w[u + r, v + r] * x[ii, jj, ch]
                out[i, j, ch] = acc
    return out[:, :, 0] if squeeze else out


def reference_nms(props, iou_threshold: float):
    """Textbook O(n^2) greedy NMS."""
    ranked = sorted(enumerate(props), key=lambda t: (-t[1].score, t[0]))
    kept = []
    for _, p in ranked:
        if all(iou_obb(p.box, q.box) < iou_threshold for q in kept):
            kept.append(p)
    return kept
