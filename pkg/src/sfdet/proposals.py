"""Single-feature RPN post-processing: filter, top-k, decode, rotated NMS."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .anchors import AnchorLattice
from .formats import dumps_csv
from .geom import OBox, iou_obb, iou_obb_many, iou_upper_bound
from .scoremap import Kernel, apply_hpf, make_kernel, sigmoid_map

MAX_LOG_SCALE = math.log(1000.0)
DEFAULT_BUDGETS = (2000, 6000, 10000)


@dataclass(frozen=True)
class Proposal:
    box: OBox
    score: float
    source_anchor: tuple[int, int, int] = (-1, -1, -1)

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    k_pre: int = 2000
    k_post: int = 2000
    nms_iou_threshold: float = 0.8
    hpf_enabled: bool = False
    hpf_kernel: Kernel = field(default_factory=lambda: make_kernel("unsharp", 5))

    def __post_init__(self):
        if not 0 < self.k_post <= self.k_pre:
            raise ValueError("need 0 < k_post <= k_pre")
        if not 0 < self.nms_iou_threshold < 1:
            raise ValueError("nms_iou_threshold must lie in (0, 1)")


def decode(lattice: AnchorLattice, deltas, indices: Sequence[tuple[int, int, int]]) -> list[OBox]:
    """Apply ``(dx, dy, dw, dh, dtheta)`` offsets to the indexed anchors.

    ``deltas`` has shape ``(H, W, 5 * A)``; anchor ``k`` owns channels
    ``5k .. 5k + 4``.
    """
    d = np.asarray(deltas, dtype=float)
    out = []
    for i, j, k in indices:
        a = lattice.anchor(i, j, k)
        dx, dy, dw, dh, dt = d[i, j, 5 * k:5 * k + 5]
        out.append(OBox(
            a.cx + dx * a.w,
            a.cy + dy * a.h,
            a.w * math.exp(min(dw, MAX_LOG_SCALE)),
            a.h * math.exp(min(dh, MAX_LOG_SCALE)),
            float(dt),
        ))
    return out


def topk(scores, k: int) -> list[tuple[int, int, int]]:
    """Indices of the ``k`` best scores; ties go to the lower flat index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        s = s[:, :, None]
    _, w, c = s.shape
    order = np.argsort(-s.reshape(-1), kind="stable")[:k]
    return [(int(f // (w * c)), int(f // c % w), int(f % c)) for f in order]


def rotated_nms(props: Sequence[Proposal], iou_threshold: float) -> list[Proposal]:
    """Greedy hard NMS with exact rotated IoU.

    A candidate is dropped when its IoU with an already-kept box reaches
    ``iou_threshold``. Output is sorted by descending score, ties in input
    order.
    """
    order = sorted(range(len(props)), key=lambda n: -props[n].score)
    if not order:
        return []
    boxes = [props[n].box for n in order]
    arr = np.array([b.as_tuple() for b in boxes])
    alive = np.ones(len(order), dtype=bool)
    keep = []
    for n in range(len(order)):
        if not alive[n]:
            continue
        keep.append(props[order[n]])
        rest = np.flatnonzero(alive[n + 1:]) + n + 1
        if not len(rest):
            continue
        # the bound never underestimates, so skipped pairs cannot reach the threshold
        near = rest[iou_upper_bound(boxes[n], arr[rest]) >= iou_threshold]
        for m in near:
            if iou_obb(boxes[n], boxes[m]) >= iou_threshold:
                alive[m] = False
    return keep


def _check_shapes(scores: np.ndarray, deltas: np.ndarray, lattice: AnchorLattice) -> None:
    h, w, a = scores.shape
    if (h, w) != (lattice.feature_h, lattice.feature_w):
        raise ValueError(f"score map {h}x{w} does not match lattice "
                         f"{lattice.feature_h}x{lattice.feature_w}")
    if a != lattice.anchors_per_location:
        raise ValueError(f"score map has {a} channels, lattice has "
                         f"{lattice.anchors_per_location} anchors per location")
    if deltas.shape != (h, w, 5 * a):
        raise ValueError(f"delta map shape {deltas.shape} != {(h, w, 5 * a)}")


def rpn_postprocess(scores, deltas, lattice: AnchorLattice, cfg: PipelineConfig,
                    n_jobs: int = 1) -> list[Proposal]:
    """Logits -> sigmoid -> optional high-pass filter -> top-k -> decode -> NMS."""
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        s = s[:, :, None]
    d = np.asarray(deltas, dtype=float)
    if s.ndim != 3:
        raise ValueError(f"score map must be 3-D, got shape {s.shape}")
    _check_shapes(s, d, lattice)
    prob = sigmoid_map(s)
    if cfg.hpf_enabled:
        prob = apply_hpf(prob, cfg.hpf_kernel, n_jobs=n_jobs)
    idx = topk(prob, cfg.k_pre)
    boxes = decode(lattice, d, idx)
    props = [Proposal(b, float(prob[i, j, k]), (i, j, k)) for b, (i, j, k) in zip(boxes, idx)]
    return rotated_nms(props, cfg.nms_iou_threshold)[:cfg.k_post]


def rpn_postprocess_batch(items, lattice: AnchorLattice, cfg: PipelineConfig,
                          n_jobs: int = 1) -> list[list[Proposal]]:
    """Run the pipeline over several ``(scores, deltas)`` pairs."""
    items = list(items)
    if n_jobs == 1:
        return [rpn_postprocess(s, d, lattice, cfg) for s, d in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda sd: rpn_postprocess(sd[0], sd[1], lattice, cfg), items))


def mean_pairwise_iou(props: Sequence[Proposal]) -> float:
    n = len(props)
    if n < 2:
        return 0.0
    arr = np.array([p.box.as_tuple() for p in props])
    total = 0.0
    for a in range(n - 1):
        rest = arr[a + 1:]
        # pairs whose bounding boxes are disjoint contribute nothing
        touching = rest[iou_upper_bound(props[a].box, rest) > 1e-9]
        if len(touching):
            total += float(iou_obb_many(props[a].box, touching).sum())
    return total / (n * (n - 1) / 2)


@dataclass(frozen=True)
class BudgetRow:
    budget: int
    proposal_count: int
    mean_pairwise_iou: float


def roi_budget_sweep(scores, deltas, lattice: AnchorLattice, budgets: Sequence[int],
                     cfg: PipelineConfig) -> list[BudgetRow]:
    """Treat each budget as a post-NMS cap and record duplication statistics."""
    if not budgets:
        raise ValueError("budgets must be non-empty")
    rows = []
    for b in budgets:
        run_cfg = replace(cfg, k_pre=max(cfg.k_pre, int(b)), k_post=int(b))
        props = rpn_postprocess(scores, deltas, lattice, run_cfg)
        rows.append(BudgetRow(int(b), len(props), mean_pairwise_iou(props)))
    return rows


PROPOSAL_HEADER = ("cx", "cy", "w", "h", "theta", "score")


def proposals_to_rows(props: Sequence[Proposal]) -> list[tuple]:
    return [(p.box.cx, p.box.cy, p.box.w, p.box.h, p.box.theta, p.score) for p in props]


def proposals_to_csv(props: Sequence[Proposal]) -> str:
    return dumps_csv(PROPOSAL_HEADER, proposals_to_rows(props))


def proposals_to_json(props: Sequence[Proposal]) -> list[dict]:
    return [
        dict(zip(PROPOSAL_HEADER, row), source_anchor=list(p.source_anchor))
        for p, row in zip(props, proposals_to_rows(props))
    ]


def proposals_from_records(records) -> list[Proposal]:
    out = []
    for r in records:
        box = OBox(float(r["cx"]), float(r["cy"]), float(r["w"]), float(r["h"]), float(r["theta"]))
        src = tuple(int(v) for v in r.get("source_anchor", (-1, -1, -1)))
        out.append(Proposal(box, float(r["score"]), src))
    return out


def read_proposals(text: str, fmt: str) -> list[Proposal]:
    """Parse proposals from CSV (with header) or JSON text."""
    if fmt == "json":
        data = json.loads(text)
        if isinstance(data, dict):
            data = data.get("proposals", [])
        return proposals_from_records(data)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    return proposals_from_records(csv.DictReader(lines))

