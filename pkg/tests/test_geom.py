import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfdet.geom import (ConvexPolygon, HBox, OBox, convex_clip, iou_hbb, iou_obb, iou_obb_many,
                        iou_raster_oracle, iou_upper_bound, normalize_angle, obox_to_polygon,
                        polygon_area, rotate_about)

OCTAGON_AREA = 2 * (math.sqrt(2) - 1)  # unit square cut by its 45 degree copy
OCTAGON_IOU = OCTAGON_AREA / (2 - OCTAGON_AREA)


def _vertex_set(poly, nd=9):
    return {(round(x, nd) + 0.0, round(y, nd) + 0.0) for x, y in poly.vertices}


boxes = st.builds(
    OBox,
    st.floats(-500, 500), st.floats(-500, 500),
    st.floats(1, 300), st.floats(1, 300),
    st.floats(-math.pi, math.pi),
)


def test_angle_normalization_range():
    for t in np.linspace(-10, 10, 2001):
        n = normalize_angle(t)
        assert -math.pi / 2 <= n < math.pi / 2
        assert math.isclose(math.cos(2 * n), math.cos(2 * t), abs_tol=1e-9)
    assert normalize_angle(math.pi / 2) == -math.pi / 2


def test_negative_extent_rejected():
    with pytest.raises(ValueError):
        OBox(0, 0, -1, 1)
    with pytest.raises(ValueError):
        HBox(1, 0, 0, 1)


def test_axis_aligned_square_polygon():
    assert _vertex_set(obox_to_polygon(OBox(0, 0, 2, 2, 0))) == {(1, 1), (-1, 1), (-1, -1), (1, -1)}


def test_quarter_turn_square_same_vertices():
    a = obox_to_polygon(OBox(0, 0, 2, 2, 0))
    b = obox_to_polygon(OBox(0, 0, 2, 2, math.pi / 2))
    assert _vertex_set(a) == _vertex_set(b)


def test_rotated_rectangle_corner():
    poly = obox_to_polygon(OBox(0, 0, 2, 1, math.pi / 4))
    # (+1, +0.5) rotated by 45 degrees, by hand
    expect = (math.sqrt(2) / 2 * 0.5, math.sqrt(2) / 2 * 1.5)
    assert any(math.isclose(x, expect[0], abs_tol=1e-12) and math.isclose(y, expect[1], abs_tol=1e-12)
               for x, y in poly.vertices)
    assert round(expect[0], 4) == 0.3536 and round(expect[1], 4) == 1.0607


def test_polygon_is_ccw():
    poly = obox_to_polygon(OBox(3, 4, 5, 2, 0.7))
    pts = poly.vertices
    signed = sum(pts[i][0] * pts[i - 3][1] - pts[i - 3][0] * pts[i][1] for i in range(4))
    # i-3 == i+1 modulo 4, so this is the shoelace sum in vertex order
    assert signed > 0


def test_degenerate_box_zero_area_polygon():
    assert polygon_area(obox_to_polygon(OBox(0, 0, 0, 5, 0.3))) == 0.0
    assert polygon_area(obox_to_polygon(OBox(0, 0, 4, 0, 0))) == 0.0


def test_polygon_area_examples():
    assert polygon_area(ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])) == 1.0
    assert polygon_area(ConvexPolygon()) == 0.0
    assert polygon_area(ConvexPolygon([(0, 0), (2, 0), (0, 2)])) == 2.0


def test_polygon_normalization():
    cw = ConvexPolygon([(0, 1), (1, 1), (1, 0), (0, 0)])
    assert polygon_area(cw) == 1.0
    collinear = ConvexPolygon([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2)])
    assert len(collinear) == 4
    dup = ConvexPolygon([(0, 0), (0, 0), (1, 0), (1, 1), (0, 1)])
    assert len(dup) == 4
    assert ConvexPolygon([(0, 0), (1, 1), (2, 2)]).is_empty


def test_clip_idempotent():
    sq = ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert abs(polygon_area(convex_clip(sq, sq)) - 1.0) <= 1e-12


def test_clip_disjoint():
    a = ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    b = ConvexPolygon([(5, 5), (6, 5), (6, 6), (5, 6)])
    assert convex_clip(a, b).is_empty


def test_clip_octagon():
    a = obox_to_polygon(OBox(0, 0, 1, 1, 0))
    b = obox_to_polygon(OBox(0, 0, 1, 1, math.pi / 4))
    inter = convex_clip(a, b)
    assert len(inter) == 8
    assert abs(polygon_area(inter) - OCTAGON_AREA) <= 1e-12
    assert abs(OCTAGON_AREA - 0.828427) < 1e-6


def test_clip_contained():
    big = ConvexPolygon([(-10, -10), (10, -10), (10, 10), (-10, 10)])
    tri = ConvexPolygon([(0, 0), (2, 0), (0, 2)])
    assert _vertex_set(convex_clip(big, tri)) == _vertex_set(tri)
    assert _vertex_set(convex_clip(tri, big)) == _vertex_set(tri)


def test_iou_obb_examples():
    a = OBox(10, 10, 8, 4, 0.3)
    assert iou_obb(a, a) == pytest.approx(1.0, abs=1e-12)
    assert iou_obb(a, OBox(100, 100, 8, 4, 0.3)) == 0.0
    sq = OBox(0, 0, 1, 1, 0)
    assert abs(iou_obb(sq, OBox(0, 0, 1, 1, math.pi / 4)) - OCTAGON_IOU) <= 1e-12
    assert round(OCTAGON_IOU, 6) == 0.707107


def test_iou_obb_degenerate():
    d = OBox(0, 0, 0, 4)
    assert iou_obb(d, d) == 0.0
    assert iou_obb(d, OBox(0, 0, 4, 4)) == 0.0


def test_iou_hbb_examples():
    a = HBox(0, 0, 16, 16)
    assert iou_hbb(a, a) == 1.0
    # inter 12*12 = 144, union 256 + 256 - 144 = 368
    assert iou_hbb(a, HBox(4, 4, 20, 20)) == pytest.approx(144 / 368, abs=1e-15)
    assert round(144 / 368, 6) == 0.391304
    assert iou_hbb(a, HBox(16, 0, 32, 16)) == 0.0


def test_raster_oracle_examples():
    a = OBox(3, -2, 40, 25, 0.4)
    assert abs(iou_raster_oracle(a, a, 256) - 1.0) <= 0.01
    sq = OBox(0, 0, 1, 1, 0)
    assert abs(iou_raster_oracle(sq, OBox(0, 0, 1, 1, math.pi / 4), 512) - 0.7071) <= 0.01
    assert iou_raster_oracle(a, OBox(500, 500, 10, 10), 256) == 0.0


def test_raster_oracle_rejects_coarse():
    with pytest.raises(ValueError):
        iou_raster_oracle(OBox(0, 0, 1, 1), OBox(0, 0, 1, 1), 63)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou_obb(a, b)
    assert v == iou_obb(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes)
def test_iou_identity(a):
    assert abs(iou_obb(a, a) - 1.0) <= 1e-9


@given(boxes, st.floats(-50, 50), st.floats(-50, 50), st.floats(1, 50), st.floats(1, 50),
       st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi),
       st.floats(-100, 100), st.floats(-100, 100))
def test_iou_rotation_invariant(a, dx, dy, w, h, t, angle, px, py):
    b = OBox(a.cx + dx, a.cy + dy, w, h, t)
    before = iou_obb(a, b)
    after = iou_obb(rotate_about(a, angle, px, py), rotate_about(b, angle, px, py))
    assert abs(before - after) < 1e-6


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(1, 80), st.floats(1, 80),
       st.floats(-100, 100), st.floats(-100, 100), st.floats(1, 80), st.floats(1, 80))
def test_theta_zero_matches_hbb(x1, y1, w1, h1, x2, y2, w2, h2):
    a, b = OBox(x1, y1, w1, h1, 0), OBox(x2, y2, w2, h2, 0)
    assert abs(iou_obb(a, b) - iou_hbb(a.to_hbox(), b.to_hbox())) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(boxes, st.floats(-30, 30), st.floats(-30, 30), st.floats(4, 200), st.floats(4, 200),
       st.floats(-math.pi, math.pi))
def test_agrees_with_raster(a, dx, dy, w, h, t):
    b = OBox(a.cx + dx, a.cy + dy, w, h, t)
    assert abs(iou_obb(a, b) - iou_raster_oracle(a, b, 512)) <= 1e-2


@given(boxes, boxes)
def test_clip_area_bounded_by_inputs(a, b):
    inter = polygon_area(convex_clip(obox_to_polygon(a), obox_to_polygon(b)))
    assert inter <= min(a.area, b.area) * (1 + 1e-9) + 1e-9


@settings(max_examples=60)
@given(boxes, st.lists(st.tuples(st.floats(-40, 40), st.floats(-40, 40), st.floats(0, 300),
                                 st.floats(0, 300), st.floats(-math.pi, math.pi)),
                       min_size=1, max_size=12))
def test_batch_iou_and_bound(a, rel):
    others = [OBox(a.cx + dx, a.cy + dy, w, h, t) for dx, dy, w, h, t in rel]
    arr = np.array([b.as_tuple() for b in others])
    exact = np.array([iou_obb(a, b) for b in others])
    assert np.max(np.abs(iou_obb_many(a, arr) - exact)) <= 1e-9
    assert np.all(exact <= iou_upper_bound(a, arr))


def test_batch_iou_special_cases():
    sq = OBox(0, 0, 1, 1, 0)
    arr = np.array([sq.as_tuple(), (0, 0, 1, 1, math.pi / 4), (9, 9, 1, 1, 0), (0, 0, 0, 1, 0),
                    (0.5, 0, 1, 1, 0)])
    got = iou_obb_many(sq, arr)
    assert got[0] == pytest.approx(1.0, abs=1e-12)
    assert abs(got[1] - OCTAGON_IOU) <= 1e-12
    assert got[2] == 0.0 and got[3] == 0.0
    assert got[4] == pytest.approx(1 / 3, abs=1e-12)
    assert iou_obb_many(sq, np.zeros((0, 5))).shape == (0,)
