"""Bipartite label assignment between ground truths and query predictions.

The cost of pairing a ground truth with a prediction combines class,
verb, box-regression and generalized-IoU terms; on top of that sits an
external category term driven by each query's prior category: zero for a
category match, a medium penalty for background queries, and a prohibitive
one for padding or mismatched categories. The best injective pairing is
found exactly with a potentials-based shortest-augmenting-path solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import cxcywh_to_xyxy, giou
from .errors import ConfigError, InfeasibleMatchingError, SchemaError, ShapeError
from .linalg import Matrix
from .priors import CategoryRef
from .serialize import as_float, as_int, as_list, require_keys
from .transformer import HOIPrediction

__all__ = [
    "GroundTruthTriplet",
    "CostWeights",
    "CostMatrix",
    "Assignment",
    "base_cost",
    "external_cost",
    "hungarian",
    "assign_labels",
]


@dataclass(frozen=True)
class GroundTruthTriplet:
    """One annotated interaction: both boxes in center form, the object
    category, and the non-empty set of verbs that apply."""

    b_h: tuple[float, float, float, float]  # cx, cy, w, h in [0, 1]
    b_o: tuple[float, float, float, float]
    object_category: int
    verbs: frozenset[int]

    def __post_init__(self):
        for box in (self.b_h, self.b_o):
            if len(box) != 4:
                raise ValueError("boxes need 4 components")
            cx, cy, w, h = box
            if not all(0.0 <= v <= 1.0 for v in box):
                raise ValueError(f"box components outside [0, 1]: {box}")
            if w <= 0.0 or h <= 0.0:
                raise ValueError(f"box width/height must be positive: {box}")
        if self.object_category < 0:
            raise ValueError("object_category must be nonnegative")
        verbs = frozenset(int(v) for v in self.verbs)
        if not verbs:
            raise ValueError("verb set must be non-empty")
        if any(v < 0 for v in verbs):
            raise ValueError("verb ids must be nonnegative")
        object.__setattr__(self, "b_h", tuple(float(v) for v in self.b_h))
        object.__setattr__(self, "b_o", tuple(float(v) for v in self.b_o))
        object.__setattr__(self, "verbs", verbs)

    def to_json(self):
        return {
            "b_h": [float(v) for v in self.b_h],
            "b_o": [float(v) for v in self.b_o],
            "object_category": self.object_category,
            "verbs": sorted(self.verbs),
        }

    @classmethod
    def from_json(cls, obj, where: str = "ground truth") -> "GroundTruthTriplet":
        require_keys(obj, {"b_h", "b_o", "object_category", "verbs"}, where)
        def nums(key):
            vals = as_list(obj[key], f"{where}.{key}")
            if len(vals) != 4:
                raise SchemaError(f"{where}.{key}: expected 4 numbers")
            return tuple(as_float(v, f"{where}.{key}") for v in vals)
        return cls(
            b_h=nums("b_h"),
            b_o=nums("b_o"),
            object_category=as_int(obj["object_category"], f"{where}.object_category"),
            verbs=frozenset(as_int(v, f"{where}.verbs") for v in as_list(obj["verbs"], f"{where}.verbs")),
        )


@dataclass(frozen=True)
class CostWeights:
    """Relative weights of the base-cost terms; all must be nonnegative."""

    w_obj: float = 1.0
    w_verb: float = 1.0
    w_box: float = 2.5
    w_giou: float = 1.0

    def __post_init__(self):
        if min(self.w_obj, self.w_verb, self.w_box, self.w_giou) < 0.0:
            raise ConfigError("cost weights must be nonnegative")

    def to_json(self):
        return {
            "w_obj": float(self.w_obj),
            "w_verb": float(self.w_verb),
            "w_box": float(self.w_box),
            "w_giou": float(self.w_giou),
        }

    @classmethod
    def from_json(cls, obj, where: str = "weights") -> "CostWeights":
        require_keys(obj, {"w_obj", "w_verb", "w_box", "w_giou"}, where)
        return cls(**{k: as_float(v, f"{where}.{k}") for k, v in obj.items()})


@dataclass(frozen=True)
class CostMatrix:
    """N_gt x N_q pairing costs."""

    values: Matrix


@dataclass(frozen=True)
class Assignment:
    """Injective ground-truth -> query pairing, one pair per ground truth."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(g), int(q)) for g, q in self.pairs)
        gts = [g for g, _ in pairs]
        queries = [q for _, q in pairs]
        if len(set(gts)) != len(gts) or len(set(queries)) != len(queries):
            raise ValueError("assignment must be injective on both sides")
        object.__setattr__(self, "pairs", pairs)

    def query_of(self, gt_index: int) -> int | None:
        for g, q in self.pairs:
            if g == gt_index:
                return q
        return None

    def total(self, cost: CostMatrix) -> float:
        return float(sum(cost.values.array[g, q] for g, q in self.pairs))


def _verb_cost(c_v: np.ndarray, verbs: frozenset[int]) -> float:
    """Mean miss on annotated verbs plus mean false score on the rest,
    scaled into [0, 1]."""
    pos = [1.0 - c_v[v] for v in sorted(verbs)]
    neg = [c_v[v] for v in range(len(c_v)) if v not in verbs]
    pos_mean = sum(pos) / len(pos)
    neg_mean = sum(neg) / len(neg) if neg else 0.0
    return (pos_mean + neg_mean) / 2.0


def base_cost(preds, gts, weights: CostWeights = CostWeights()) -> CostMatrix:
    """Set-prediction matching cost without the category prior term."""
    preds = list(preds)
    gts = list(gts)
    values = np.zeros((len(gts), len(preds)))
    for j, pred in enumerate(preds):
        if not isinstance(pred, HOIPrediction):
            raise ShapeError("predictions must be HOIPrediction instances")
        ph = cxcywh_to_xyxy(pred.b_h)
        po = cxcywh_to_xyxy(pred.b_o)
        for i, gt in enumerate(gts):
            if gt.object_category >= len(pred.c_o) - 1:
                raise ShapeError(
                    f"ground-truth category {gt.object_category} outside prediction's "
                    f"{len(pred.c_o) - 1} object classes"
                )
            if max(gt.verbs) >= len(pred.c_v):
                raise ShapeError("ground-truth verb id outside prediction's verb count")
            obj_term = 1.0 - pred.c_o[gt.object_category]
            verb_term = _verb_cost(pred.c_v, gt.verbs)
            box_term = sum(abs(a - b) for a, b in zip(pred.b_h, gt.b_h)) + sum(
                abs(a - b) for a, b in zip(pred.b_o, gt.b_o)
            )
            giou_term = (1.0 - giou(ph, cxcywh_to_xyxy(gt.b_h))) + (
                1.0 - giou(po, cxcywh_to_xyxy(gt.b_o))
            )
            values[i, j] = (
                weights.w_obj * obj_term
                + weights.w_verb * verb_term
                + weights.w_box * box_term
                + weights.w_giou * giou_term
            )
    return CostMatrix(values=Matrix(values))


def external_cost(prior_of_query, gts, v: float = 500.0) -> CostMatrix:
    """Category prior term: 0 on a category match, v for background queries,
    2v for padding queries or a category mismatch."""
    if v <= 0.0:
        raise ConfigError("v must be positive")
    priors = list(prior_of_query)
    gts = list(gts)
    values = np.empty((len(gts), len(priors)))
    for j, prior in enumerate(priors):
        if not isinstance(prior, CategoryRef):
            raise ShapeError("prior_of_query must hold CategoryRef values")
        if prior.kind == "background":
            col = v
        elif prior.kind == "none":
            col = 2.0 * v
        else:
            col = None
        for i, gt in enumerate(gts):
            if col is not None:
                values[i, j] = col
            elif prior.category_id == gt.object_category:
                values[i, j] = 0.0
            else:
                values[i, j] = 2.0 * v
    return CostMatrix(values=Matrix(values))


def _solve_square(a: np.ndarray) -> np.ndarray:
    """Exact minimum-cost perfect matching on a square cost matrix.

    Potentials + shortest augmenting path, one augmentation per row in row
    order; column scans take the lowest index among ties, so equal-cost
    optima resolve toward lower query indices. Returns the matched column
    per row.
    """
    n = a.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    matched_row = np.zeros(n + 1, dtype=np.int64)  # column j (1-based) -> row, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        matched_row[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = matched_row[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[matched_row[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if matched_row[j0] == 0:
                break
        while j0:
            j1 = int(way[j0])
            matched_row[j0] = matched_row[j1]
            j0 = j1
    out = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        if matched_row[j]:
            out[matched_row[j] - 1] = j - 1
    return out


def hungarian(cost: CostMatrix) -> Assignment:
    """Optimal assignment of every ground truth to a distinct query.

    Wide matrices are padded to square with a constant larger than any real
    entry; pad rows cannot influence the real rows' optimum and are dropped
    from the result.
    """
    values = cost.values.array
    n_gt, n_q = values.shape
    if n_gt > n_q:
        raise InfeasibleMatchingError(f"{n_gt} ground truths but only {n_q} queries")
    if n_gt == 0:
        return Assignment(pairs=())
    if n_gt < n_q:
        pad = float(np.max(values)) + 1.0
        square = np.full((n_q, n_q), pad)
        square[:n_gt] = values
    else:
        square = values.copy()
    row_to_col = _solve_square(square)
    return Assignment(pairs=tuple((i, int(row_to_col[i])) for i in range(n_gt)))


def assign_labels(
    preds,
    gts,
    prior_of_query=None,
    weights: CostWeights = CostWeights(),
    v: float = 500.0,
) -> Assignment:
    """Hungarian assignment over base cost plus, when query priors are
    available, the external category cost."""
    base = base_cost(preds, gts, weights)
    if prior_of_query is None:
        return hungarian(base)
    ext = external_cost(prior_of_query, gts, v)
    if ext.values.cols != base.values.cols:
        raise ShapeError("prior_of_query length does not match prediction count")
    return hungarian(CostMatrix(values=Matrix(base.values.array + ext.values.array)))
