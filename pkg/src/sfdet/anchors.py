"""Anchor lattices, max-IoU assignment and coverage analysis.

Anchors are axis-aligned and sit at cell centres, ``((j + 0.5) * stride,
(i + 0.5) * stride)``. Within one location the anchor index ``k`` runs over
sizes (outermost), then scale multipliers, then aspect ratios.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geom import OBox, iou_obb

ORIGINAL_SIZES = (32, 64, 128, 256, 512)
ADJUSTED_SIZES = (16, 32, 64, 128, 256)
FPN_STRIDES = (4, 8, 16, 32, 64)
DEFAULT_RATIOS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class AnchorSpec:
    base_sizes: tuple[float, ...] = ADJUSTED_SIZES
    aspect_ratios: tuple[float, ...] = DEFAULT_RATIOS
    strides: tuple[float, ...] = FPN_STRIDES
    scales_per_size: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        for name in ("base_sizes", "aspect_ratios", "strides", "scales_per_size"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.base_sizes or not self.aspect_ratios or not self.scales_per_size:
            raise ValueError("anchor spec needs at least one size, ratio and scale")
        if len(self.base_sizes) != len(self.strides):
            raise ValueError("base_sizes and strides must have equal length")
        values = self.base_sizes + self.strides + self.aspect_ratios + self.scales_per_size
        if any(v <= 0 for v in values):
            raise ValueError("anchor spec entries must be positive")
        for size, stride in zip(self.base_sizes, self.strides):
            q = size / stride
            if abs(q - round(q)) > 1e-9 or round(q) < 1:
                raise ValueError(f"base size {size:g} is not a multiple of stride {stride:g}")
        for lo, hi in zip(self.base_sizes, self.base_sizes[1:]):
            if abs(hi / lo - 2.0) > 1e-9:
                raise ValueError("consecutive base sizes must differ by a factor of 2")

    def shapes(self, sizes: Sequence[float]) -> tuple[tuple[float, float], ...]:
        out = []
        for s in sizes:
            for m in self.scales_per_size:
                for r in self.aspect_ratios:
                    sr = math.sqrt(r)
                    out.append((s * m * sr, s * m / sr))
        return tuple(out)


@dataclass(frozen=True)
class AnchorLattice:
    level: int
    stride: float
    feature_h: int
    feature_w: int
    shapes: tuple[tuple[float, float], ...]
    _boxes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.feature_h <= 0 or self.feature_w <= 0:
            raise ValueError("feature dims must be positive")
        if not self.shapes:
            raise ValueError("lattice needs at least one anchor shape")
        object.__setattr__(self, "_boxes", self._build())

    @property
    def anchors_per_location(self) -> int:
        return len(self.shapes)

    @property
    def num_anchors(self) -> int:
        return self.feature_h * self.feature_w * self.anchors_per_location

    def center(self, i: int, j: int) -> tuple[float, float]:
        return ((j + 0.5) * self.stride, (i + 0.5) * self.stride)

    def anchor(self, i: int, j: int, k: int) -> OBox:
        if not (0 <= i < self.feature_h and 0 <= j < self.feature_w
                and 0 <= k < self.anchors_per_location):
            raise IndexError(f"anchor index {(i, j, k)} out of range")
        cx, cy = self.center(i, j)
        w, h = self.shapes[k]
        return OBox(cx, cy, w, h, 0.0)

    def flat_index(self, i: int, j: int, k: int) -> int:
        return (i * self.feature_w + j) * self.anchors_per_location + k

    def unravel(self, flat: int) -> tuple[int, int, int]:
        cell, k = divmod(int(flat), self.anchors_per_location)
        i, j = divmod(cell, self.feature_w)
        return (i, j, k)

    def _build(self) -> np.ndarray:
        a = len(self.shapes)
        ii, jj = np.meshgrid(np.arange(self.feature_h), np.arange(self.feature_w), indexing="ij")
        cx = np.repeat(((jj + 0.5) * self.stride).reshape(-1), a)
        cy = np.repeat(((ii + 0.5) * self.stride).reshape(-1), a)
        wh = np.tile(np.asarray(self.shapes, dtype=float), (self.feature_h * self.feature_w, 1))
        return np.column_stack([cx, cy, wh[:, 0], wh[:, 1]])

    def boxes(self) -> np.ndarray:
        """All anchors as an (N, 4) array of ``cx, cy, w, h`` in flat order."""
        return self._boxes.copy()

    def hboxes(self) -> np.ndarray:
        """All anchors as an (N, 4) array of ``x_min, y_min, x_max, y_max``."""
        b = self._boxes
        return np.column_stack([b[:, 0] - b[:, 2] / 2, b[:, 1] - b[:, 3] / 2,
                                b[:, 0] + b[:, 2] / 2, b[:, 1] + b[:, 3] / 2])


def generate_lattice(spec: AnchorSpec, level: int, feature_h: int, feature_w: int) -> AnchorLattice:
    if not 0 <= level < len(spec.base_sizes):
        raise IndexError(f"level {level} out of range for {len(spec.base_sizes)} levels")
    return AnchorLattice(level, spec.strides[level], int(feature_h), int(feature_w),
                         spec.shapes([spec.base_sizes[level]]))


def multi_anchor_lattice(spec: AnchorSpec, stride: float, feature_h: int, feature_w: int,
                         level: int = 0) -> AnchorLattice:
    """Attach every size of ``spec`` to a single lattice at ``stride``."""
    return AnchorLattice(level, float(stride), int(feature_h), int(feature_w),
                         spec.shapes(spec.base_sizes))


def lattices_for_image(spec: AnchorSpec, image_w: float, image_h: float) -> list[AnchorLattice]:
    return [
        generate_lattice(spec, lvl, math.ceil(image_h / s), math.ceil(image_w / s))
        for lvl, s in enumerate(spec.strides)
    ]


@dataclass(frozen=True)
class Assignment:
    object_index: int
    best_level: int
    best_anchor: tuple[int, int, int]
    best_iou: float
    positive: bool


def _hbb_iou_vector(obj: OBox, anchors_xyxy: np.ndarray) -> np.ndarray:
    # same operation order as geom.iou_hbb so ties resolve identically
    hb = obj.to_hbox()
    x1, y1, x2, y2 = anchors_xyxy.T
    iw = np.maximum(0.0, np.minimum(hb.x_max, x2) - np.maximum(hb.x_min, x1))
    ih = np.maximum(0.0, np.minimum(hb.y_max, y2) - np.maximum(hb.y_min, y1))
    inter = iw * ih
    union = hb.area + (x2 - x1) * (y2 - y1) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def _obb_iou_vector(obj: OBox, lattice: AnchorLattice, anchors_xyxy: np.ndarray) -> np.ndarray:
    hb = obj.to_hbox()
    x1, y1, x2, y2 = anchors_xyxy.T
    touch = (np.minimum(hb.x_max, x2) > np.maximum(hb.x_min, x1)) & \
            (np.minimum(hb.y_max, y2) > np.maximum(hb.y_min, y1))
    iou = np.zeros(len(anchors_xyxy))
    for flat in np.flatnonzero(touch):
        iou[flat] = iou_obb(obj, lattice.anchor(*lattice.unravel(flat)))
    return iou


def _assign_one(idx: int, obj: OBox, lattices: Sequence[AnchorLattice],
                xyxy: Sequence[np.ndarray], pos_threshold: float, mode: str) -> Assignment:
    best = (-1.0, None, -1)
    for lat, boxes in zip(lattices, xyxy):
        if mode == "obb":
            iou = _obb_iou_vector(obj, lat, boxes)
        else:
            iou = _hbb_iou_vector(obj, boxes)
        flat = int(np.argmax(iou))
        if iou[flat] > best[0]:
            best = (float(iou[flat]), lat, flat)
    score, lat, flat = best
    return Assignment(idx, lat.level, lat.unravel(flat), score, score >= pos_threshold)


def assign_max_iou(objects: Sequence[OBox], lattices: Sequence[AnchorLattice],
                   pos_threshold: float = 0.5, mode: str = "hbb",
                   n_jobs: int = 1) -> list[Assignment]:
    """Best anchor per object over all lattices.

    ``mode="hbb"`` scores anchors against the object's enclosing axis-aligned
    box; ``mode="obb"`` uses the exact rotated IoU. Ties go to the lower
    level, then the lower flat anchor index.
    """
    if not lattices:
        raise ValueError("at least one lattice is required")
    if not 0 < pos_threshold < 1:
        raise ValueError("pos_threshold must lie in (0, 1)")
    if mode not in ("hbb", "obb"):
        raise ValueError(f"unknown IoU mode {mode!r}")
    ordered = sorted(lattices, key=lambda lat: lat.level)
    xyxy = [lat.hboxes() for lat in ordered]

    def work(item):
        return _assign_one(item[0], item[1], ordered, xyxy, pos_threshold, mode)

    if n_jobs == 1 or len(objects) < 2:
        return [work(item) for item in enumerate(objects)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(work, enumerate(objects)))


@dataclass
class CoverageReport:
    strides: tuple[float, ...]
    base_sizes: tuple[float, ...]
    pos_threshold: float
    num_objects: int
    matched_counts: list[int]
    unmatched_count: int

    @property
    def matched_fractions(self) -> list[float]:
        n = self.num_objects
        return [c / n if n else 0.0 for c in self.matched_counts]

    @property
    def unmatched_fraction(self) -> float:
        return self.unmatched_count / self.num_objects if self.num_objects else 0.0

    def rows(self) -> list[tuple[str, int, float]]:
        out = [(f"P{int(round(math.log2(s)))}", c, f)
               for s, c, f in zip(self.strides, self.matched_counts, self.matched_fractions)]
        out.append(("unmatched", self.unmatched_count, self.unmatched_fraction))
        return out

    def to_dict(self) -> dict:
        return {
            "strides": list(self.strides),
            "base_sizes": list(self.base_sizes),
            "pos_threshold": self.pos_threshold,
            "num_objects": self.num_objects,
            "levels": [
                {"level": name, "matched_count": c, "matched_fraction": f}
                for name, c, f in self.rows()
            ],
            "unmatched_count": self.unmatched_count,
            "unmatched_fraction": self.unmatched_fraction,
        }


def coverage_report(objects: Sequence[OBox], spec: AnchorSpec, image_w: float, image_h: float,
                    pos_threshold: float = 0.5, mode: str = "hbb",
                    n_jobs: int = 1) -> CoverageReport:
    """Count each object once, on the level of its best anchor, if that
    anchor clears ``pos_threshold``; everything else is unmatched."""
    lattices = lattices_for_image(spec, image_w, image_h)
    counts = [0] * len(lattices)
    unmatched = 0
    if objects:
        for a in assign_max_iou(objects, lattices, pos_threshold, mode, n_jobs):
            if a.positive:
                counts[a.best_level] += 1
            else:
                unmatched += 1
    return CoverageReport(spec.strides, spec.base_sizes, pos_threshold, len(objects),
                          counts, unmatched)


def worst_case_iou(anchor_size: float, stride: float, object_size: float) -> float:
    """Lowest best-anchor IoU a square object can get on a square-anchor lattice.

    The worst placement is half a stride from the nearest anchor on both
    axes, leaving a per-axis overlap of ``(a + o)/2 - stride/2`` capped by the
    smaller side.
    """
    if anchor_size <= 0 or stride <= 0 or object_size <= 0:
        raise ValueError("sizes and stride must be positive")
    a, o = float(anchor_size), float(object_size)
    overlap = max(0.0, min(a, o, (a + o) / 2 - stride / 2))
    inter = overlap * overlap
    return inter / (a * a + o * o - inter)
