"""DOTA annotation ingestion, object-size statistics and tile planning."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geom import ConvexPolygon, OBox, convex_clip, polygon_area

HEADER_PREFIXES = ("imagesource", "gsd")


class AnnotationParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, p3, p4) -> bool:
    d1, d2 = _cross(p3, p4, p1), _cross(p3, p4, p2)
    d3, d4 = _cross(p1, p2, p3), _cross(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def _signed_area(pts) -> float:
    return 0.5 * sum(pts[i][0] * pts[(i + 1) % len(pts)][1] - pts[(i + 1) % len(pts)][0] * pts[i][1]
                     for i in range(len(pts)))


def normalize_quad(quad: Sequence[float]) -> tuple[float, ...]:
    """Reorder a quad into a simple, counter-clockwise vertex cycle.

    The first vertex stays first. Self-intersecting (bow-tie) quads are
    re-sorted by angle around their centroid.
    """
    pts = [(float(quad[2 * i]), float(quad[2 * i + 1])) for i in range(4)]
    if _segments_cross(pts[0], pts[1], pts[2], pts[3]) or \
            _segments_cross(pts[1], pts[2], pts[3], pts[0]):
        mx = sum(p[0] for p in pts) / 4
        my = sum(p[1] for p in pts) / 4
        ang = [math.atan2(p[1] - my, p[0] - mx) for p in pts]
        rel = [(a - ang[0]) % (2 * math.pi) for a in ang]
        pts = [pts[i] for i in sorted(range(4), key=lambda i: rel[i])]
    if _signed_area(pts) < 0:
        pts = [pts[0], pts[3], pts[2], pts[1]]
    return tuple(v for p in pts for v in p)


@dataclass(frozen=True)
class Annotation:
    quad: tuple[float, ...]
    category: str
    difficulty: int = 0

    def __post_init__(self):
        if len(self.quad) != 8:
            raise ValueError("quad needs 8 coordinates")
        object.__setattr__(self, "quad", normalize_quad(self.quad))

    def points(self) -> list[tuple[float, float]]:
        q = self.quad
        return [(q[0], q[1]), (q[2], q[3]), (q[4], q[5]), (q[6], q[7])]

    @property
    def area(self) -> float:
        return abs(_signed_area(self.points()))

    def shifted(self, dx: float, dy: float) -> "Annotation":
        q = [v + (dx if n % 2 == 0 else dy) for n, v in enumerate(self.quad)]
        return Annotation(tuple(q), self.category, self.difficulty)


def _is_header(line: str) -> bool:
    head = line.split(":", 1)[0].strip().lower()
    return ":" in line and head in HEADER_PREFIXES


def parse_annotations(text: str) -> list[Annotation]:
    """Parse DOTA label text: ``x1 y1 ... x4 y4 category difficulty`` per line."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or _is_header(line):
            continue
        tok = line.split()
        if len(tok) != 10:
            raise AnnotationParseError(lineno, f"expected 10 fields, got {len(tok)}")
        try:
            quad = tuple(float(t) for t in tok[:8])
        except ValueError:
            raise AnnotationParseError(lineno, "non-numeric coordinate") from None
        if not all(math.isfinite(v) for v in quad):
            raise AnnotationParseError(lineno, "non-finite coordinate")
        try:
            difficulty = int(tok[9])
        except ValueError:
            raise AnnotationParseError(lineno, f"bad difficulty {tok[9]!r}") from None
        out.append(Annotation(quad, tok[8], difficulty))
    return out


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def serialize_annotations(annos: Iterable[Annotation], header: Sequence[str] = ()) -> str:
    lines = list(header)
    for a in annos:
        lines.append(" ".join([_fmt(v) for v in a.quad] + [a.category, str(a.difficulty)]))
    return "\n".join(lines) + ("\n" if lines else "")


def read_annotation_dir(path) -> dict[str, list[Annotation]]:
    """Parse every ``*.txt`` file of a directory, keyed by file stem, sorted."""
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {p}")
    out = {}
    for f in sorted(p.glob("*.txt")):
        try:
            out[f.stem] = parse_annotations(f.read_text(encoding="utf-8"))
        except AnnotationParseError as exc:
            raise AnnotationParseError(exc.lineno, f"{f.name}: {exc}") from None
    return out


def _hull(points) -> list[tuple[float, float]]:
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def min_area_rect(points) -> OBox:
    """Smallest enclosing rotated rectangle, trying each hull edge direction."""
    hull = _hull([(float(x), float(y)) for x, y in points])
    if not hull:
        raise ValueError("no points")
    if len(hull) == 1:
        return OBox(hull[0][0], hull[0][1], 0.0, 0.0, 0.0)
    best = None
    n = len(hull)
    edges = n if n > 2 else 1
    for i in range(edges):
        (x0, y0), (x1, y1) = hull[i], hull[(i + 1) % n]
        ang = math.atan2(y1 - y0, x1 - x0)
        c, s = math.cos(ang), math.sin(ang)
        us = [x * c + y * s for x, y in hull]
        vs = [-x * s + y * c for x, y in hull]
        u0, u1, v0, v1 = min(us), max(us), min(vs), max(vs)
        area = (u1 - u0) * (v1 - v0)
        if best is None or area < best[0] - 1e-9 * max(1.0, best[0]):
            um, vm = (u0 + u1) / 2, (v0 + v1) / 2
            best = (area, OBox(um * c - vm * s, um * s + vm * c, u1 - u0, v1 - v0, ang))
    return best[1]


def quad_to_obox(a: Annotation) -> OBox:
    return min_area_rect(a.points())


@dataclass(frozen=True)
class TileWindow:
    x_offset: int
    y_offset: int
    width: int
    height: int

    def polygon(self) -> ConvexPolygon:
        x0, y0 = self.x_offset, self.y_offset
        x1, y1 = x0 + self.width, y0 + self.height
        return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def _axis_offsets(length: int, patch: int, step: int) -> list[int]:
    if length <= patch:
        return [0]
    offs = []
    x = 0
    while x + patch < length:
        offs.append(x)
        x += step
    offs.append(length - patch)
    return offs


def tile_plan(image_w: int, image_h: int, patch: int = 1024, overlap: int = 200,
              step: int | None = None) -> list[TileWindow]:
    """Sliding windows covering the image, row-major.

    Windows advance by ``patch - overlap`` (or by ``step`` when given) and the
    last window on each axis is pulled back to end at the border. Images
    smaller than ``patch`` get one window of their own size.
    """
    if step is not None:
        overlap = patch - step
    if not patch > overlap >= 0:
        raise ValueError(f"need patch > overlap >= 0 (patch={patch}, overlap={overlap})")
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dims must be positive")
    stride = patch - overlap
    xs = _axis_offsets(image_w, patch, stride)
    ys = _axis_offsets(image_h, patch, stride)
    w, h = min(patch, image_w), min(patch, image_h)
    return [TileWindow(x, y, w, h) for y in ys for x in xs]


def clip_annotations(annos: Iterable[Annotation], window: TileWindow,
                     min_area_fraction: float = 0.5) -> list[Annotation]:
    """Keep annotations mostly inside ``window``, shifted into its frame.

    Quads stay whole. Zero-area quads are kept when their centroid falls
    inside the window.
    """
    if not 0.0 <= min_area_fraction <= 1.0:
        raise ValueError("min_area_fraction must lie in [0, 1]")
    win = window.polygon()
    out = []
    for a in annos:
        pts = a.points()
        area = a.area
        if area <= 0:
            mx = sum(p[0] for p in pts) / 4
            my = sum(p[1] for p in pts) / 4
            keep = (window.x_offset <= mx <= window.x_offset + window.width
                    and window.y_offset <= my <= window.y_offset + window.height)
        else:
            inter = polygon_area(convex_clip(ConvexPolygon(_hull(pts)), win))
            keep = inter >= min_area_fraction * area
        if keep:
            out.append(a.shifted(-window.x_offset, -window.y_offset))
    return out


def object_sizes(annos: Iterable[Annotation]) -> np.ndarray:
    """sqrt of each object's minimum-area-rectangle area."""
    return np.array([math.sqrt(quad_to_obox(a).area) for a in annos], dtype=float)


def size_histogram(annos: Iterable[Annotation], bin_edges: Sequence[float]) -> np.ndarray:
    """Counts per half-open bin ``[e_i, e_{i+1})``; out-of-range sizes are ignored."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly ascending with at least 2 entries")
    sizes = object_sizes(annos)
    counts = np.zeros(len(edges) - 1, dtype=int)
    if sizes.size:
        idx = np.searchsorted(edges, sizes, side="right") - 1
        valid = (idx >= 0) & (idx < len(counts))
        np.add.at(counts, idx[valid], 1)
    return counts


def annotations_extent(annos: Iterable[Annotation]) -> tuple[float, float]:
    xs, ys = [0.0], [0.0]
    for a in annos:
        xs.extend(a.quad[0::2])
        ys.extend(a.quad[1::2])
    return max(xs), max(ys)

