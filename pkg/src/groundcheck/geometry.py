"""Normalized bounding-box arithmetic.

Boxes are ``<x, y, w, h>`` with the top-left corner at ``(x, y)``, all in
[0, 1]. The all-zero box is the "absent" box carried by negated findings.
A zero-area box still has a position: its corner point takes part in hulls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

EPS = 1e-6


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not (-EPS <= v <= 1 + EPS):
                raise ValueError(f"box {name}={v} outside [0, 1]")
        if self.x + self.w > 1 + EPS or self.y + self.h > 1 + EPS:
            raise ValueError(f"box {self.as_list()} extends past the frame")

    @classmethod
    def zero(cls) -> "BBox":
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 values, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def clipped(cls, x: float, y: float, w: float, h: float) -> "BBox":
        """Clamp an unconstrained box (e.g. a network output) into the frame."""
        x = min(max(float(x), 0.0), 1.0)
        y = min(max(float(y), 0.0), 1.0)
        w = min(max(float(w), 0.0), 1.0 - x)
        h = min(max(float(h), 0.0), 1.0 - y)
        return cls(x, y, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def is_zero(self) -> bool:
        return self.x == 0 and self.y == 0 and self.w == 0 and self.h == 0

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def contains(self, other: "BBox", tol: float = EPS) -> bool:
        return (
            other.x >= self.x - tol
            and other.y >= self.y - tol
            and other.x2 <= self.x2 + tol
            and other.y2 <= self.y2 + tol
        )


def area(b: BBox) -> float:
    return b.w * b.h


def intersection_area(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def union_area(a: BBox, b: BBox) -> float:
    return area(a) + area(b) - intersection_area(a, b)


def iou(a: BBox, b: BBox) -> float:
    u = union_area(a, b)
    if u < EPS:
        return 0.0
    return intersection_area(a, b) / u


def hull(a: BBox, b: BBox) -> BBox:
    """Smallest axis-aligned box containing both inputs."""
    x1, y1 = min(a.x, b.x), min(a.y, b.y)
    x2, y2 = max(a.x2, b.x2), max(a.y2, b.y2)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def hull_all(boxes: Iterable[BBox]) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("hull of no boxes")
    out = boxes[0]
    for b in boxes[1:]:
        out = hull(out, b)
    return out


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the empty fraction of the hull."""
    c = area(hull(a, b))
    if c < EPS:
        return 0.0
    return iou(a, b) - (c - union_area(a, b)) / c


def giou_paper_literal(a: BBox, b: BBox) -> float:
    """The variant that subtracts the hull minus the *intersection*.

    Kept for auditability only; it is not a proper overlap measure.
    """
    c = area(hull(a, b))
    if c < EPS:
        return 0.0
    return iou(a, b) - (c - intersection_area(a, b)) / c
