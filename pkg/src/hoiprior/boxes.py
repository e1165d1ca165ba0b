"""Axis-aligned box geometry on normalized coordinates."""

from __future__ import annotations

__all__ = ["cxcywh_to_xyxy", "xyxy_to_cxcywh", "iou", "giou", "clamp_box"]


def cxcywh_to_xyxy(box) -> tuple[float, float, float, float]:
    cx, cy, w, h = box
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def xyxy_to_cxcywh(box) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = box
    return ((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)


def clamp_box(box, lo: float = 0.0, hi: float = 1.0) -> tuple[float, float, float, float]:
    return tuple(min(max(v, lo), hi) for v in box)


def iou(a, b) -> float:
    """Intersection over union of two x1,y1,x2,y2 boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a, b) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the empty fraction of the hull."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    iou_val = inter / union if union > 0.0 else 0.0
    if hull <= 0.0:
        return iou_val
    # the hull contains the union; a negative gap is float rounding
    return iou_val - max(0.0, hull - union) / hull
