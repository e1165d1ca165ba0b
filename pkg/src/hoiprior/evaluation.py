"""Role mean average precision over interaction categories.

A prediction counts as a true positive when its object category and verb
match an unclaimed ground truth and both of its boxes overlap that ground
truth strictly above the IoU threshold; each ground truth can be claimed
once, by the highest-ranked prediction that reaches it. Average precision
uses the monotone precision envelope over all ranks (an eleven-point
variant is available for cross-checking), and category APs are averaged
per rarity split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .boxes import cxcywh_to_xyxy, iou
from .errors import ConfigError
from .matching import GroundTruthTriplet
from .postprocess import HOITriplet

__all__ = [
    "HOICategory",
    "EvalResult",
    "match_predictions",
    "average_precision",
    "role_map",
    "evaluate_scenes",
]


class HOICategory(NamedTuple):
    object_category: int
    verb: int


@dataclass(frozen=True)
class EvalResult:
    per_category_ap: dict
    map_full: float
    map_rare: float
    map_nonrare: float

    def to_json(self):
        return {
            "per_category_ap": {
                f"{cat.object_category}:{cat.verb}": float(ap)
                for cat, ap in self.per_category_ap.items()
            },
            "map_full": float(self.map_full),
            "map_rare": float(self.map_rare),
            "map_nonrare": float(self.map_nonrare),
        }


def _min_iou(pred: HOITriplet, gt: GroundTruthTriplet) -> float:
    return min(
        iou(pred.b_h, cxcywh_to_xyxy(gt.b_h)),
        iou(pred.b_o, cxcywh_to_xyxy(gt.b_o)),
    )


def _expand_gts(gts) -> list[tuple[HOICategory, GroundTruthTriplet]]:
    """A ground truth annotated with several verbs is one claimable instance
    per verb, each under its own interaction category."""
    out = []
    for gt in gts:
        for verb in sorted(gt.verbs):
            out.append((HOICategory(gt.object_category, verb), gt))
    return out


def match_scored(preds, gts, iou_thresh: float = 0.5) -> list[tuple[float, HOICategory, bool]]:
    """Greedy matching for one scene.

    Returns (score, category, is_tp) per prediction in descending score
    order (ties keep input order). A prediction claims the eligible ground
    truth with the highest min-IoU; eligibility needs matching category and
    both IoUs strictly above the threshold.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ConfigError(f"iou threshold {iou_thresh} outside (0, 1]")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    instances = _expand_gts(gts)
    claimed = [False] * len(instances)
    results = []
    for i in order:
        pred = preds[i]
        cat = HOICategory(pred.object_category, pred.verb)
        best_instance = -1
        best_overlap = iou_thresh
        for g, (gt_cat, gt) in enumerate(instances):
            if claimed[g] or gt_cat != cat:
                continue
            overlap = _min_iou(pred, gt)
            if overlap > best_overlap:
                best_overlap = overlap
                best_instance = g
        if best_instance >= 0:
            claimed[best_instance] = True
            results.append((pred.score, cat, True))
        else:
            results.append((pred.score, cat, False))
    return results


def match_predictions(preds, gts, iou_thresh: float = 0.5) -> list[bool]:
    """True-positive flags in descending score order."""
    return [tp for _, _, tp in match_scored(preds, gts, iou_thresh)]


def average_precision(flags, n_gt: int, interpolation: str = "all_point") -> float:
    """Area under the precision-recall curve for one category.

    `flags` must be in descending score order. With no ground truths the
    category carries no information and scores 0 (callers skip it).
    """
    if n_gt < 0:
        raise ConfigError("n_gt must be nonnegative")
    if interpolation not in ("all_point", "eleven_point"):
        raise ConfigError(f"unknown interpolation {interpolation!r}")
    if n_gt == 0 or not flags:
        return 0.0
    tp = np.cumsum([1.0 if f else 0.0 for f in flags])
    ranks = np.arange(1, len(flags) + 1)
    precision = tp / ranks
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interpolation == "eleven_point":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            reachable = precision[recall >= t - 1e-12]
            total += float(np.max(reachable)) if reachable.size else 0.0
        return total / 11.0
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(flags)):
        if flags[k]:
            ap += (recall[k] - prev_recall) * envelope[k]
            prev_recall = recall[k]
    return float(ap)


def _result_from_pools(per_cat, n_gt_per_cat, partition, interpolation) -> EvalResult:
    for cat in n_gt_per_cat:
        if cat not in partition:
            raise ConfigError(
                f"partition missing ground-truth category {cat.object_category}:{cat.verb}"
            )
    per_category_ap = {}
    for cat, n_gt in sorted(n_gt_per_cat.items()):
        entries = per_cat.get(cat, [])
        entries.sort(key=lambda e: -e[0])
        flags = [tp for _, tp in entries]
        per_category_ap[cat] = average_precision(flags, n_gt, interpolation)
    def split_mean(name):
        aps = [ap for cat, ap in per_category_ap.items() if partition[cat] == name]
        return float(np.mean(aps)) if aps else 0.0
    full = float(np.mean(list(per_category_ap.values()))) if per_category_ap else 0.0
    return EvalResult(
        per_category_ap=per_category_ap,
        map_full=full,
        map_rare=split_mean("rare"),
        map_nonrare=split_mean("nonrare"),
    )


def role_map(preds, gts, partition, iou_thresh: float = 0.5, interpolation: str = "all_point") -> EvalResult:
    """Per-category AP and split means for a single scene.

    `partition` maps every ground-truth category to "rare", "nonrare", or
    "full" (counted in the overall mean only). The full mean runs over all
    ground-truth categories.
    """
    return evaluate_scenes([list(preds)], [list(gts)], partition, iou_thresh, interpolation)


def evaluate_scenes(
    scene_preds,
    scene_gts,
    partition,
    iou_thresh: float = 0.5,
    interpolation: str = "all_point",
) -> EvalResult:
    """Pool matches from many scenes: per category, predictions are ranked
    globally by score while each claims ground truths only within its own
    scene."""
    if len(scene_preds) != len(scene_gts):
        raise ConfigError("scene prediction and ground-truth lists differ in length")
    per_cat: dict[HOICategory, list[tuple[float, bool]]] = {}
    n_gt_per_cat: dict[HOICategory, int] = {}
    for preds, gts in zip(scene_preds, scene_gts):
        for cat, _ in _expand_gts(gts):
            n_gt_per_cat[cat] = n_gt_per_cat.get(cat, 0) + 1
        for score, cat, tp in match_scored(preds, gts, iou_thresh):
            per_cat.setdefault(cat, []).append((score, tp))
    return _result_from_pools(per_cat, n_gt_per_cat, partition, interpolation)
