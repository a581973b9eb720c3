import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from groundcheck.geometry import (
    BBox,
    area,
    giou,
    giou_paper_literal,
    hull,
    hull_all,
    intersection_area,
    iou,
    union_area,
)
from oracles import random_aligned_box, raster_geometry


@st.composite
def boxes(draw, allow_degenerate=True):
    x = draw(st.floats(0, 1))
    y = draw(st.floats(0, 1))
    w = draw(st.floats(0, 1 - x))
    h = draw(st.floats(0, 1 - y))
    if not allow_degenerate:
        assume(w * h > 1e-4)
    return BBox(x, y, w, h)


def test_bbox_validation():
    with pytest.raises(ValueError):
        BBox(0.5, 0.5, 0.6, 0.1)
    with pytest.raises(ValueError):
        BBox(-0.1, 0, 0.1, 0.1)
    BBox(0.5, 0.5, 0.5 + 5e-7, 0.5)  # within epsilon
    assert BBox.zero().is_zero
    assert BBox.clipped(-0.2, 0.9, 0.5, 0.5).as_list() == pytest.approx([0.0, 0.9, 0.5, 0.1])


def test_area_examples():
    assert area(BBox.zero()) == 0
    assert area(BBox(0, 0, 1, 1)) == 1
    assert area(BBox(0.14, 0.13, 0.72, 0.56)) == pytest.approx(0.72 * 0.56, abs=1e-15)
    assert area(BBox(0.14, 0.13, 0.72, 0.56)) == pytest.approx(0.4032, abs=1e-12)


def test_iou_examples():
    a = BBox(0, 0, 0.5, 0.5)
    assert iou(a, a) == 1
    assert iou(a, BBox(0.5, 0.5, 0.5, 0.5)) == 0
    assert iou(a, BBox(0.25, 0.25, 0.5, 0.5)) == pytest.approx(0.0625 / 0.4375, abs=1e-12)
    assert iou(BBox.zero(), BBox.zero()) == 0


def test_hull_examples():
    b = BBox(0.1, 0.2, 0.3, 0.4)
    assert hull(b, b).as_list() == pytest.approx(b.as_list(), abs=1e-15)
    assert hull(BBox(0, 0, 0.2, 0.2), BBox(0.8, 0.8, 0.2, 0.2)) == BBox(0, 0, 1, 1)
    h = hull(BBox(0.1, 0.1, 0.2, 0.2), BBox.zero())
    assert h.as_list() == pytest.approx([0, 0, 0.3, 0.3], abs=1e-15)
    assert hull_all([b, BBox.zero(), BBox(0.9, 0.9, 0.1, 0.1)]).as_list() == pytest.approx([0, 0, 1, 1])
    with pytest.raises(ValueError):
        hull_all([])


def test_giou_examples():
    b = BBox(0.2, 0.2, 0.3, 0.3)
    assert giou(b, b) == pytest.approx(1)
    assert giou(BBox.zero(), BBox.zero()) == 0
    assert giou(BBox(0, 0, 0.5, 0.5), BBox(0.5, 0.5, 0.5, 0.5)) == pytest.approx(-0.5, abs=1e-12)


def test_literal_variant_differs_only_by_overlap_term():
    a, b = BBox(0.1, 0.1, 0.4, 0.4), BBox(0.2, 0.2, 0.4, 0.4)
    c = area(hull(a, b))
    assert giou_paper_literal(a, b) - giou(a, b) == pytest.approx(-(union_area(a, b) - intersection_area(a, b)) / c)
    assert giou_paper_literal(a, b) < giou(a, b)
    assert giou_paper_literal(a, a) == pytest.approx(1.0)


@given(boxes(), boxes())
def test_symmetry(a, b):
    assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
    assert giou(a, b) == pytest.approx(giou(b, a), abs=1e-12)
    assert hull(a, b).as_list() == pytest.approx(hull(b, a).as_list(), abs=1e-15)


@given(boxes(), boxes())
def test_ranges_and_order(a, b):
    i, g = iou(a, b), giou(a, b)
    assert 0 <= i <= 1 + 1e-12
    assert -1 - 1e-12 <= g <= 1 + 1e-12
    assert g <= i + 1e-12


@given(boxes(allow_degenerate=False))
def test_self_overlap(b):
    assert iou(b, b) == pytest.approx(1)
    assert giou(b, b) == pytest.approx(1)


@given(boxes(), boxes(), boxes())
def test_hull_is_least_upper_bound(a, b, c):
    h = hull(a, b)
    assert h.contains(a) and h.contains(b)
    if c.contains(a, tol=0) and c.contains(b, tol=0):
        assert c.contains(h)


@given(boxes(allow_degenerate=False), boxes(allow_degenerate=False))
def test_giou_equals_iou_iff_hull_is_union(a, b):
    gap = area(hull(a, b)) - union_area(a, b)
    if gap < 1e-9:
        assert giou(a, b) == pytest.approx(iou(a, b), abs=1e-9)
    else:
        assert giou(a, b) < iou(a, b)


def test_raster_oracle_on_a_few_pairs():
    rng = np.random.default_rng(5)
    for k in range(60):
        a = random_aligned_box(rng, degenerate=k % 5 == 0)
        b = random_aligned_box(rng, degenerate=k % 7 == 0)
        o = raster_geometry(a, b)
        A, B = BBox(*a), BBox(*b)
        assert iou(A, B) == pytest.approx(o["iou"], abs=2e-3)
        assert giou(A, B) == pytest.approx(o["giou"], abs=2e-3)
        assert hull(A, B).as_list() == pytest.approx(list(o["hull"]), abs=2e-3)
