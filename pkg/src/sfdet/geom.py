"""Oriented-box geometry: conversion, areas, convex clipping and IoU."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-9
HALF_PI = math.pi / 2


def normalize_angle(theta: float) -> float:
    """Map an angle onto [-pi/2, pi/2); rectangles are pi-periodic."""
    t = (theta + HALF_PI) % math.pi - HALF_PI
    if t >= HALF_PI:
        t -= math.pi
    return t


@dataclass(frozen=True)
class HBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted HBox: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class OBox:
    """Rotated rectangle. ``w`` runs along ``theta``, ``h`` along its normal."""

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative extent: w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_hbox(self) -> HBox:
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw = abs(self.w / 2 * c) + abs(self.h / 2 * s)
        hh = abs(self.w / 2 * s) + abs(self.h / 2 * c)
        return HBox(self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    def corners(self) -> list[tuple[float, float]]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = self.w / 2, self.h / 2
        out = []
        for lx, ly in ((hw, hh), (-hw, hh), (-hw, -hh), (hw, -hh)):
            out.append((self.cx + lx * c - ly * s, self.cy + lx * s + ly * c))
        return out

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)


def _signed_area(pts: Sequence[tuple[float, float]]) -> float:
    n = len(pts)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2


class ConvexPolygon:
    """Counter-clockwise convex polygon, or the empty polygon.

    Construction normalizes: near-duplicate vertices are merged, collinear
    runs are collapsed, clockwise input is reversed, and anything without
    positive area becomes empty.
    """

    __slots__ = ("vertices",)

    def __init__(self, points: Iterable[Sequence[float]] = ()):
        self.vertices: tuple[tuple[float, float], ...] = _normalize(
            [(float(p[0]), float(p[1])) for p in points]
        )

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __repr__(self):
        return f"ConvexPolygon({list(self.vertices)!r})"

    @property
    def is_empty(self) -> bool:
        return not self.vertices

    @property
    def area(self) -> float:
        return polygon_area(self)


def _normalize(pts: list[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    merged: list[tuple[float, float]] = []
    for p in pts:
        if merged and math.dist(p, merged[-1]) < EPS:
            continue
        merged.append(p)
    while len(merged) > 1 and math.dist(merged[0], merged[-1]) < EPS:
        merged.pop()
    if len(merged) < 3:
        return ()
    if _signed_area(merged) < 0:
        merged.reverse()

    # drop vertices whose neighbours make a (near) straight or reflex turn
    changed = True
    while changed and len(merged) >= 3:
        changed = False
        for i in range(len(merged)):
            ax, ay = merged[i - 1]
            bx, by = merged[i]
            cx, cy = merged[(i + 1) % len(merged)]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross <= EPS * max(1.0, math.dist((ax, ay), (cx, cy))):
                del merged[i]
                changed = True
                break
    if len(merged) < 3 or _signed_area(merged) <= EPS:
        return ()
    return tuple(merged)


EMPTY = ConvexPolygon()


def obox_to_polygon(b: OBox) -> ConvexPolygon:
    return ConvexPolygon(b.corners())


def polygon_area(p: ConvexPolygon | Sequence[Sequence[float]]) -> float:
    """Shoelace area (absolute); 0 for fewer than three vertices."""
    pts = p.vertices if isinstance(p, ConvexPolygon) else [tuple(v) for v in p]
    return abs(_signed_area(pts))


def convex_clip(subject: ConvexPolygon, clip: ConvexPolygon) -> ConvexPolygon:
    """Intersect two convex CCW polygons by clipping ``subject`` against each
    edge of ``clip`` in turn."""
    out = list(subject.vertices)
    cv = clip.vertices
    if not out or not cv:
        return EMPTY
    for i in range(len(cv)):
        ax, ay = cv[i - 1]
        bx, by = cv[i]
        ex, ey = bx - ax, by - ay
        norm = math.hypot(ex, ey)
        inp, out = out, []
        if not inp:
            break
        # signed distance to the edge line, positive on the inner (left) side
        dist = [(ex * (py - ay) - ey * (px - ax)) / norm for px, py in inp]
        prev, dprev = inp[-1], dist[-1]
        for cur, dcur in zip(inp, dist):
            cur_in = dcur >= -EPS
            prev_in = dprev >= -EPS
            if cur_in != prev_in:
                t = dprev / (dprev - dcur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            if cur_in:
                out.append(cur)
            prev, dprev = cur, dcur
    return ConvexPolygon(out)


def _circumradius(b: OBox) -> float:
    return 0.5 * math.hypot(b.w, b.h)


def iou_obb(a: OBox, b: OBox) -> float:
    """Exact IoU of two rotated rectangles (0 when the union is empty)."""
    # canonical operand order makes the result exactly symmetric
    if b.as_tuple() < a.as_tuple():
        a, b = b, a
    union_base = a.area + b.area
    if union_base <= 0:
        return 0.0
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > _circumradius(a) + _circumradius(b):
        return 0.0
    inter = polygon_area(convex_clip(obox_to_polygon(a), obox_to_polygon(b)))
    union = union_base - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_hbb(a: HBox, b: HBox) -> float:
    iw = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    ih = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def _inside_mask(b: OBox, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    c, s = math.cos(b.theta), math.sin(b.theta)
    dx, dy = xs - b.cx, ys - b.cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= b.w / 2) & (np.abs(v) <= b.h / 2)


def iou_raster_oracle(a: OBox, b: OBox, resolution: int = 512) -> float:
    """Grid-sampled IoU estimate, independent of the clipping code.

    Samples ``resolution`` x ``resolution`` cell centres over the joint
    axis-aligned extent of both boxes. Intended for tests only.
    """
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    ha, hb = a.to_hbox(), b.to_hbox()
    x0, x1 = min(ha.x_min, hb.x_min), max(ha.x_max, hb.x_max)
    y0, y1 = min(ha.y_min, hb.y_min), max(ha.y_max, hb.y_max)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    xs = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
    ys = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
    gx, gy = np.meshgrid(xs, ys)
    ma, mb = _inside_mask(a, gx, gy), _inside_mask(b, gx, gy)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def rotate_about(b: OBox, angle: float, px: float = 0.0, py: float = 0.0) -> OBox:
    """Rotate a box rigidly about the point (px, py)."""
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = b.cx - px, b.cy - py
    return OBox(px + dx * c - dy * s, py + dx * s + dy * c, b.w, b.h, b.theta + angle)


def _corners_xy(boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(n, 5) boxes -> x and y corner arrays of shape (n, 4), CCW as ``OBox.corners``."""
    cx, cy, w, h, t = boxes.T
    c, s = np.cos(t)[:, None], np.sin(t)[:, None]
    lx = np.outer(w, [0.5, -0.5, -0.5, 0.5])
    ly = np.outer(h, [0.5, 0.5, -0.5, -0.5])
    return cx[:, None] + lx * c - ly * s, cy[:, None] + lx * s + ly * c


def _inside(px, py, qx, qy) -> np.ndarray:
    """Points (n, m) inside (or on) convex CCW quads (n, 4)."""
    ex = np.roll(qx, -1, axis=1) - qx
    ey = np.roll(qy, -1, axis=1) - qy
    tol = EPS * np.hypot(ex, ey)[:, None, :]
    side = ex[:, None, :] * (py[:, :, None] - qy[:, None, :]) \
        - ey[:, None, :] * (px[:, :, None] - qx[:, None, :])
    return np.all(side >= -tol, axis=2)


def _too_thin(w, h):
    # boxes that ConvexPolygon normalization collapses to empty
    return (w < EPS) | (h < EPS) | (w * h <= EPS * np.maximum(1.0, np.hypot(w, h)))


def iou_obb_many(box: OBox, boxes) -> np.ndarray:
    """Rotated IoU of one box against an ``(n, 5)`` array, vectorized.

    The intersection polygon is rebuilt from its candidate vertices (corners
    of either box inside the other, plus edge crossings) sorted by angle, so
    it agrees with :func:`iou_obb` to rounding error.
    """
    other = np.asarray(boxes, dtype=float).reshape(-1, 5)
    n = len(other)
    out = np.zeros(n)
    if n == 0:
        return out
    area_a = box.w * box.h
    area_b = other[:, 2] * other[:, 3]
    ax, ay = (np.tile(np.array(v), (n, 1)) for v in zip(*box.corners()))
    bx, by = _corners_xy(other)

    # edge crossings, 4 x 4 segment pairs per row
    rx = (np.roll(ax, -1, axis=1) - ax)[:, :, None]
    ry = (np.roll(ay, -1, axis=1) - ay)[:, :, None]
    sx = (np.roll(bx, -1, axis=1) - bx)[:, None, :]
    sy = (np.roll(by, -1, axis=1) - by)[:, None, :]
    qpx = bx[:, None, :] - ax[:, :, None]
    qpy = by[:, None, :] - ay[:, :, None]
    rxs = rx * sy - ry * sx
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qpx * sy - qpy * sx) / rxs
        u = (qpx * ry - qpy * rx) / rxs
    hit = (np.abs(rxs) > 1e-12) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    t = np.where(hit, t, 0.0)
    cx = (ax[:, :, None] + t * rx).reshape(n, 16)
    cy = (ay[:, :, None] + t * ry).reshape(n, 16)

    px = np.concatenate([ax, bx, cx], axis=1)
    py = np.concatenate([ay, by, cy], axis=1)
    valid = np.concatenate([_inside(ax, ay, bx, by), _inside(bx, by, ax, ay),
                            hit.reshape(n, 16)], axis=1)
    px = np.where(valid, px, 0.0)
    py = np.where(valid, py, 0.0)
    count = valid.sum(axis=1)
    denom = np.maximum(count, 1)
    mx = px.sum(axis=1) / denom
    my = py.sum(axis=1) / denom
    ang = np.where(valid, np.arctan2(py - my[:, None], px - mx[:, None]), np.inf)
    order = np.argsort(ang, axis=1, kind="stable")
    px = np.take_along_axis(px, order, axis=1)
    py = np.take_along_axis(py, order, axis=1)
    ok = np.take_along_axis(valid, order, axis=1)
    # pad the tail with the first vertex so the shoelace closes on its own
    px = np.where(ok, px, px[:, :1])
    py = np.where(ok, py, py[:, :1])
    inter = 0.5 * np.abs((px * np.roll(py, -1, axis=1) - np.roll(px, -1, axis=1) * py).sum(axis=1))
    inter = np.where(count >= 3, inter, 0.0)
    union = area_a + area_b - inter
    good = (union > 0) & ~_too_thin(other[:, 2], other[:, 3])
    if _too_thin(np.array(box.w), np.array(box.h)):
        good[:] = False
    out[good] = np.clip(inter[good] / union[good], 0.0, 1.0)
    return out


def iou_upper_bound(box: OBox, boxes) -> np.ndarray:
    """Cheap vectorized bound with ``iou_obb(box, b) <= bound`` for every row."""
    other = np.asarray(boxes, dtype=float).reshape(-1, 5)
    ha = box.to_hbox()
    c, s = np.abs(np.cos(other[:, 4])), np.abs(np.sin(other[:, 4]))
    hw = other[:, 2] / 2 * c + other[:, 3] / 2 * s
    hh = other[:, 2] / 2 * s + other[:, 3] / 2 * c
    iw = np.minimum(ha.x_max, other[:, 0] + hw) - np.maximum(ha.x_min, other[:, 0] - hw)
    ih = np.minimum(ha.y_max, other[:, 1] + hh) - np.maximum(ha.y_min, other[:, 1] - hh)
    area_a = box.w * box.h
    area_b = other[:, 2] * other[:, 3]
    inter = np.minimum(np.clip(iw, 0, None) * np.clip(ih, 0, None), np.minimum(area_a, area_b))
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(union > 0, inter / union, 0.0)
    # slack for rounding in the exact path
    return bound + 1e-9
