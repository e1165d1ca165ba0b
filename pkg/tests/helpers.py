"""Shared builders and independent reference implementations.

The reference functions here are deliberately written from the definitions
(scalar arithmetic, exhaustive enumeration) rather than by calling into the
package, so tests compare two independent routes to the same answer.
"""

import itertools
import math

import numpy as np

from hoiprior import GroundTruthTriplet, HOIPrediction, HOITriplet


def make_prediction(k_obj, k_verb, rng=None, obj=None, obj_prob=None, verb_probs=None,
                    b_h=None, b_o=None):
    """Hand-buildable prediction; random fields fall back to `rng` draws."""
    if rng is None:
        rng = np.random.default_rng(0)
    if b_h is None:
        b_h = tuple(rng.uniform(0.2, 0.8, size=4))
    if b_o is None:
        b_o = tuple(rng.uniform(0.2, 0.8, size=4))
    c_o = rng.uniform(0.01, 1.0, size=k_obj + 1)
    if obj is not None:
        prob = 1.0 if obj_prob is None else obj_prob
        c_o = np.full(k_obj + 1, (1.0 - prob) / k_obj)
        c_o[obj] = prob
    c_o = c_o / c_o.sum()
    if verb_probs is None:
        c_v = rng.uniform(0.05, 0.95, size=k_verb)
    else:
        c_v = np.asarray(verb_probs, dtype=float)
    return HOIPrediction(b_h=b_h, b_o=b_o, c_o=c_o, c_v=c_v)


def make_gt(rng=None, cat=0, verbs=(0,), b_h=None, b_o=None):
    if rng is None:
        rng = np.random.default_rng(0)
    if b_h is None:
        b_h = random_cxcywh(rng)
    if b_o is None:
        b_o = random_cxcywh(rng)
    return GroundTruthTriplet(b_h=b_h, b_o=b_o, object_category=cat, verbs=frozenset(verbs))


def random_cxcywh(rng):
    w = rng.uniform(0.1, 0.4)
    h = rng.uniform(0.1, 0.4)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return (float(cx), float(cy), float(w), float(h))


def random_triplet(rng, n_cats=3, n_verbs=2, box_pool=None):
    """Triplets drawn from a small pool of boxes so overlaps are common."""
    if box_pool is None:
        x1, y1 = rng.uniform(0.0, 0.5, size=2)
        b_h = (float(x1), float(y1), float(x1 + rng.uniform(0.1, 0.5)), float(y1 + rng.uniform(0.1, 0.5)))
        x1, y1 = rng.uniform(0.0, 0.5, size=2)
        b_o = (float(x1), float(y1), float(x1 + rng.uniform(0.1, 0.5)), float(y1 + rng.uniform(0.1, 0.5)))
    else:
        b_h = box_pool[rng.integers(len(box_pool))]
        b_o = box_pool[rng.integers(len(box_pool))]
    return HOITriplet(
        b_h=b_h,
        b_o=b_o,
        object_category=int(rng.integers(n_cats)),
        verb=int(rng.integers(n_verbs)),
        score=float(rng.uniform(0.0, 1.0)),
    )


def ref_iou(a, b):
    """Scalar IoU from the definition."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    if ix2 <= ix1 or iy2 <= iy1:
        return 0.0
    inter = (ix2 - ix1) * (iy2 - iy1)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def ref_iou_hoi(a, b):
    if a.object_category != b.object_category or a.verb != b.verb:
        return 0.0
    return min(ref_iou(a.b_h, b.b_h), ref_iou(a.b_o, b.b_o))


def ref_hoi_nms(triplets, t_iou):
    """Array-style rewrite of the hard-suppression loop."""
    scores = np.array([t.score for t in triplets])
    alive = np.ones(len(triplets), dtype=bool)
    kept = []
    while alive.any():
        masked = np.where(alive, scores, -np.inf)
        m = int(np.argmax(masked))
        kept.append(triplets[m])
        alive[m] = False
        for i in np.nonzero(alive)[0]:
            if ref_iou_hoi(triplets[i], triplets[m]) > t_iou:
                alive[i] = False
    return kept


def ref_hoi_softnms(triplets, t_iou, sigma=0.5):
    """Array-style rewrite of the Gaussian-decay loop."""
    scores = np.array([t.score for t in triplets], dtype=float)
    alive = np.ones(len(triplets), dtype=bool)
    kept = []
    while alive.any():
        masked = np.where(alive, scores, -np.inf)
        m = int(np.argmax(masked))
        kept.append((triplets[m], float(scores[m])))
        alive[m] = False
        for i in np.nonzero(alive)[0]:
            overlap = ref_iou_hoi(triplets[i], triplets[m])
            if overlap > t_iou:
                scores[i] = scores[i] * math.exp(-(overlap ** 2) / sigma)
    return kept


def brute_force_assignment_total(cost):
    """Exhaustive minimum over all injections of rows into columns."""
    n_rows, n_cols = cost.shape
    best = math.inf
    for cols in itertools.permutations(range(n_cols), n_rows):
        total = sum(cost[i, c] for i, c in enumerate(cols))
        best = min(best, total)
    return best


def brute_force_assignment_total_fast(cost, _cache={}):
    """Same exhaustive minimum, vectorized for the 1000-seed sweeps."""
    n_rows, n_cols = cost.shape
    key = (n_rows, n_cols)
    if key not in _cache:
        _cache[key] = np.array(list(itertools.permutations(range(n_cols), n_rows)), dtype=np.int64)
    perms = _cache[key]
    totals = cost[np.arange(n_rows)[None, :], perms].sum(axis=1)
    return float(totals.min())


def ref_average_precision(flags, n_gt):
    """Envelope area computed with explicit max-scans (O(n^2))."""
    if n_gt == 0 or not flags:
        return 0.0
    ap = 0.0
    prev_recall = 0.0
    tp = 0
    for k, flag in enumerate(flags):
        if flag:
            tp += 1
            recall = tp / n_gt
            # interpolated precision: best precision at any rank >= k
            best = 0.0
            running = 0
            for j, fj in enumerate(flags):
                if fj:
                    running += 1
                if j >= k:
                    best = max(best, running / (j + 1))
            ap += (recall - prev_recall) * best
            prev_recall = recall
    return ap
