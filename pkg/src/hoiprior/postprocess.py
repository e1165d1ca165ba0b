"""Decode head outputs into scored triplets and suppress duplicates.

A triplet pair only competes in suppression when both its object category
and its verb agree with the reference triplet; the overlap measure is then
the smaller of the human-box IoU and the object-box IoU. Hard suppression
removes overlapping triplets outright; the soft variant multiplies their
scores by a Gaussian decay in the overlap instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .boxes import clamp_box, cxcywh_to_xyxy, iou
from .errors import ConfigError, SchemaError
from .serialize import as_float, as_int, as_list, require_keys

__all__ = ["HOITriplet", "decode_triplets", "iou", "iou_hoi", "hoi_nms", "hoi_softnms"]


@dataclass(frozen=True)
class HOITriplet:
    """One decoded interaction: corner-form boxes, object category, a single
    verb, and its confidence score."""

    b_h: tuple[float, float, float, float]  # x1, y1, x2, y2
    b_o: tuple[float, float, float, float]
    object_category: int
    verb: int
    score: float

    def __post_init__(self):
        for box in (self.b_h, self.b_o):
            if len(box) != 4:
                raise ValueError("boxes need 4 components")
            x1, y1, x2, y2 = box
            if not (x1 < x2 and y1 < y2):
                raise ValueError(f"degenerate box {box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.object_category < 0 or self.verb < 0:
            raise ValueError("category ids must be nonnegative")
        object.__setattr__(self, "b_h", tuple(float(v) for v in self.b_h))
        object.__setattr__(self, "b_o", tuple(float(v) for v in self.b_o))

    def to_json(self):
        return {
            "b_h": [float(v) for v in self.b_h],
            "b_o": [float(v) for v in self.b_o],
            "object_category": self.object_category,
            "verb": self.verb,
            "score": float(self.score),
        }

    @classmethod
    def from_json(cls, obj, where: str = "triplet") -> "HOITriplet":
        require_keys(obj, {"b_h", "b_o", "object_category", "verb", "score"}, where)
        def nums(key):
            vals = as_list(obj[key], f"{where}.{key}")
            if len(vals) != 4:
                raise SchemaError(f"{where}.{key}: expected 4 numbers")
            return tuple(as_float(v, f"{where}.{key}") for v in vals)
        return cls(
            b_h=nums("b_h"),
            b_o=nums("b_o"),
            object_category=as_int(obj["object_category"], f"{where}.object_category"),
            verb=as_int(obj["verb"], f"{where}.verb"),
            score=as_float(obj["score"], f"{where}.score"),
        )


def decode_triplets(preds, score_threshold: float = 0.0) -> list[HOITriplet]:
    """Expand each multi-verb prediction into single-verb triplets.

    The object class is the argmax over the real classes (the no-object
    slot never wins); each verb scores object probability times verb
    probability and survives when that reaches the threshold. The default
    threshold keeps everything, since average precision needs the full
    ranking.
    """
    if score_threshold < 0.0:
        raise ConfigError("score threshold must be nonnegative")
    out = []
    for pred in preds:
        obj = int(np.argmax(pred.c_o[:-1]))
        obj_prob = float(pred.c_o[obj])
        b_h = clamp_box(cxcywh_to_xyxy(pred.b_h))
        b_o = clamp_box(cxcywh_to_xyxy(pred.b_o))
        for verb in range(len(pred.c_v)):
            score = obj_prob * float(pred.c_v[verb])
            if score >= score_threshold:
                out.append(
                    HOITriplet(b_h=b_h, b_o=b_o, object_category=obj, verb=verb, score=score)
                )
    return out


def iou_hoi(a: HOITriplet, b: HOITriplet) -> float:
    """Overlap between two triplets: zero across categories, otherwise the
    smaller of the two box IoUs."""
    if a.object_category != b.object_category or a.verb != b.verb:
        return 0.0
    return min(iou(a.b_h, b.b_h), iou(a.b_o, b.b_o))


def _pop_best(pool: list[HOITriplet]) -> HOITriplet:
    best = 0
    for i in range(1, len(pool)):
        if pool[i].score > pool[best].score:
            best = i
    return pool.pop(best)


def hoi_nms(triplets, t_iou: float) -> list[HOITriplet]:
    """Hard suppression: repeatedly keep the highest-scored triplet and drop
    the remaining ones overlapping it more than t_iou."""
    if not 0.0 <= t_iou <= 1.0:
        raise ConfigError(f"t_iou {t_iou} outside [0, 1]")
    pool = list(triplets)
    kept: list[HOITriplet] = []
    while pool:
        best = _pop_best(pool)
        kept.append(best)
        pool = [t for t in pool if iou_hoi(t, best) <= t_iou]
    return kept


def hoi_softnms(triplets, t_iou: float, sigma: float = 0.5) -> list[HOITriplet]:
    """Soft suppression: overlapping triplets decay by exp(-overlap^2 / sigma)
    instead of being removed; every triplet is emitted with its final score."""
    if not 0.0 <= t_iou <= 1.0:
        raise ConfigError(f"t_iou {t_iou} outside [0, 1]")
    if sigma <= 0.0:
        raise ConfigError("sigma must be positive")
    pool = list(triplets)
    kept: list[HOITriplet] = []
    while pool:
        best = _pop_best(pool)
        kept.append(best)
        updated = []
        for t in pool:
            overlap = iou_hoi(t, best)
            if overlap > t_iou:
                t = replace(t, score=t.score * math.exp(-(overlap * overlap) / sigma))
            updated.append(t)
        pool = updated
    return kept
