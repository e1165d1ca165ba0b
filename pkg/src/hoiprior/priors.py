"""Category priors from external-detector records.

Detections are filtered by confidence, pooled per category into a presence
score, and the top-scoring categories become the image's prior-category
slots: real categories in score order, one fixed background placeholder,
then padding. Each slot is mapped to a word-embedding row and the slots are
tiled over the decoder queries to seed them with category semantics.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingEmbeddingError, SchemaError, ShapeError
from .linalg import LinearLayer, Matrix
from .serialize import as_float, as_int, as_list, require_keys

__all__ = [
    "DetectionRecord",
    "CategoryRef",
    "BACKGROUND",
    "NONE_SLOT",
    "PriorCategories",
    "EmbeddingTable",
    "PriorEmbeddings",
    "CategoryAwareQuery",
    "filter_detections",
    "score_categories",
    "select_priors",
    "embed_priors",
    "build_caq",
    "oracle_priors",
]


@dataclass(frozen=True)
class CategoryRef:
    """A prior-category slot: a real category id, the background placeholder,
    or the padding value used when fewer candidates exist than slots."""

    kind: str  # "real" | "background" | "none"
    category_id: int | None = None

    def __post_init__(self):
        if self.kind not in ("real", "background", "none"):
            raise ValueError(f"bad CategoryRef kind {self.kind!r}")
        if self.kind == "real":
            if self.category_id is None or self.category_id < 0:
                raise ValueError("real CategoryRef needs a nonnegative category_id")
        elif self.category_id is not None:
            raise ValueError(f"{self.kind} CategoryRef carries no category_id")

    @classmethod
    def real(cls, category_id: int) -> "CategoryRef":
        return cls("real", category_id)

    @property
    def is_real(self) -> bool:
        return self.kind == "real"

    def to_json(self):
        return self.category_id if self.kind == "real" else self.kind

    @classmethod
    def from_json(cls, obj, where: str = "category ref") -> "CategoryRef":
        if isinstance(obj, bool):
            raise SchemaError(f"{where}: expected id or 'background'/'none'")
        if isinstance(obj, int):
            return cls.real(obj)
        if obj == "background":
            return BACKGROUND
        if obj == "none":
            return NONE_SLOT
        raise SchemaError(f"{where}: expected id or 'background'/'none', got {obj!r}")


BACKGROUND = CategoryRef("background")
NONE_SLOT = CategoryRef("none")


@dataclass(frozen=True)
class DetectionRecord:
    """One external-detector output; the box rides along but plays no part
    in prior selection."""

    category_id: int
    confidence: float
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 in [0, 1]

    def __post_init__(self):
        if self.category_id < 0:
            raise ValueError("category_id must be nonnegative")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")
        object.__setattr__(self, "box", (float(x1), float(y1), float(x2), float(y2)))

    def to_json(self):
        return {
            "category_id": self.category_id,
            "confidence": float(self.confidence),
            "box": [float(v) for v in self.box],
        }

    @classmethod
    def from_json(cls, obj, where: str = "detection") -> "DetectionRecord":
        require_keys(obj, {"category_id", "confidence", "box"}, where)
        box = as_list(obj["box"], f"{where}.box")
        if len(box) != 4:
            raise SchemaError(f"{where}.box: expected 4 numbers")
        return cls(
            category_id=as_int(obj["category_id"], f"{where}.category_id"),
            confidence=as_float(obj["confidence"], f"{where}.confidence"),
            box=tuple(as_float(v, f"{where}.box") for v in box),
        )


@dataclass(frozen=True)
class PriorCategories:
    """Ordered prior slots: real categories, one background, none-padding."""

    slots: tuple[CategoryRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        kinds = [s.kind for s in self.slots]
        if kinds.count("background") != 1:
            raise ValueError("priors must contain exactly one background slot")
        bg = kinds.index("background")
        if any(k != "real" for k in kinds[:bg]):
            raise ValueError("only real slots may precede the background slot")
        if any(k != "none" for k in kinds[bg + 1 :]):
            raise ValueError("only none-padding may follow the background slot")

    def __len__(self) -> int:
        return len(self.slots)

    def __iter__(self):
        return iter(self.slots)

    def real_ids(self) -> list[int]:
        return [s.category_id for s in self.slots if s.is_real]

    def to_json(self):
        return [s.to_json() for s in self.slots]

    @classmethod
    def from_json(cls, obj, where: str = "priors") -> "PriorCategories":
        return cls(tuple(CategoryRef.from_json(s, where) for s in as_list(obj, where)))


@dataclass(frozen=True)
class EmbeddingTable:
    """Word-embedding rows per category plus a dedicated background vector."""

    dim: int
    entries: dict[int, np.ndarray]
    background_vector: np.ndarray

    def __post_init__(self):
        bg = np.asarray(self.background_vector, dtype=np.float64)
        if bg.shape != (self.dim,) or not np.all(np.isfinite(bg)):
            raise ValueError("background vector must be finite with length dim")
        entries = {}
        for cat, vec in self.entries.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"entry {cat} must be finite with length dim")
            vec.flags.writeable = False
            entries[int(cat)] = vec
        bg = bg.copy()
        bg.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "background_vector", bg)

    def lookup(self, category_id: int) -> np.ndarray:
        try:
            return self.entries[category_id]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for category {category_id}") from None

    def to_json(self):
        return {
            "dim": self.dim,
            "background": [float(v) for v in self.background_vector],
            "entries": {str(k): [float(v) for v in vec] for k, vec in self.entries.items()},
        }

    @classmethod
    def from_json(cls, obj, where: str = "embedding table") -> "EmbeddingTable":
        require_keys(obj, {"dim", "background", "entries"}, where)
        dim = as_int(obj["dim"], f"{where}.dim")
        background = [as_float(v, f"{where}.background") for v in as_list(obj["background"], f"{where}.background")]
        if not isinstance(obj["entries"], dict):
            raise SchemaError(f"{where}.entries: expected object")
        entries = {}
        for key, vec in obj["entries"].items():
            try:
                cat = int(key)
            except ValueError:
                raise SchemaError(f"{where}.entries: key {key!r} is not a category id") from None
            entries[cat] = [as_float(v, f"{where}.entries[{key}]") for v in as_list(vec, f"{where}.entries[{key}]")]
        return cls(dim=dim, entries=entries, background_vector=np.asarray(background))


@dataclass(frozen=True)
class PriorEmbeddings:
    """One embedding row per prior slot; none-slots are exactly zero."""

    e: Matrix
    source: PriorCategories

    def __post_init__(self):
        if self.e.rows != len(self.source):
            raise ShapeError("embedding rows must match slot count")
        for i, slot in enumerate(self.source):
            if slot.kind == "none" and np.any(self.e.array[i] != 0.0):
                raise ValueError(f"none slot {i} has a nonzero embedding row")


@dataclass(frozen=True)
class CategoryAwareQuery:
    """Decoder query initialization: prior rows tiled across the queries,
    with each query remembering which slot seeded it."""

    q: Matrix
    prior_of_query: tuple[CategoryRef, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "prior_of_query", tuple(self.prior_of_query))
        if len(self.prior_of_query) != self.q.rows:
            raise ShapeError("prior_of_query length must match query count")


def filter_detections(
    dets,
    t_det: float,
    drop_category: int | None = None,
) -> list[DetectionRecord]:
    """Keep records with confidence >= t_det whose category is not dropped."""
    if not 0.0 <= t_det <= 1.0:
        raise ConfigError(f"t_det {t_det} outside [0, 1]")
    return [
        d for d in dets
        if d.confidence >= t_det and d.category_id != drop_category
    ]


def score_categories(dets) -> dict[int, float]:
    """Presence score per detected category.

    For the confidences C of one category: max(C) + (len(C) / 2) * mean(C).
    Categories with no detections are absent from the map (score 0).
    """
    pools: dict[int, list[float]] = {}
    for d in dets:
        pools.setdefault(d.category_id, []).append(d.confidence)
    scores = {}
    for cat, confs in pools.items():
        scores[cat] = max(confs) + (len(confs) / 2.0) * (sum(confs) / len(confs))
    return scores


def select_priors(scores: dict[int, float], t_can: float, n_c: int) -> PriorCategories:
    """Top (n_c - 1) categories with score >= t_can, then background, then
    none-padding. Ties in score break toward the lower category id."""
    if n_c < 2:
        raise ConfigError("n_c must be >= 2 (one real slot plus background)")
    candidates = [cat for cat, s in scores.items() if s >= t_can]
    candidates.sort(key=lambda cat: (-scores[cat], cat))
    slots = [CategoryRef.real(cat) for cat in candidates[: n_c - 1]]
    slots.append(BACKGROUND)
    slots.extend([NONE_SLOT] * (n_c - len(slots)))
    return PriorCategories(tuple(slots))


def embed_priors(
    c_star: PriorCategories,
    table: EmbeddingTable,
    proj: LinearLayer,
) -> PriorEmbeddings:
    """Project each slot's word vector to the model dimension.

    None-slots become exact zero rows without passing through the projection,
    so the projection bias cannot leak into padding.
    """
    if proj.in_dim != table.dim:
        raise ShapeError(f"projection expects dim {proj.in_dim}, table has {table.dim}")
    rows = np.zeros((len(c_star), proj.out_dim))
    for i, slot in enumerate(c_star):
        if slot.is_real:
            rows[i] = proj.apply_vector(table.lookup(slot.category_id))
        elif slot.kind == "background":
            rows[i] = proj.apply_vector(table.background_vector)
    return PriorEmbeddings(e=Matrix(rows), source=c_star)


def build_caq(e: PriorEmbeddings, n_q: int) -> CategoryAwareQuery:
    """Tile the prior rows over n_q queries: query j gets slot j mod n_c."""
    n_c = e.e.rows
    if n_q < n_c:
        raise ConfigError(f"n_q {n_q} must be >= slot count {n_c}")
    idx = np.arange(n_q) % n_c
    q = Matrix(e.e.array[idx])
    priors = tuple(e.source.slots[j % n_c] for j in range(n_q))
    return CategoryAwareQuery(q=q, prior_of_query=priors)


def oracle_priors(gts, n_c: int) -> PriorCategories:
    """Priors taken from ground truth instead of a detector.

    Keeps the (n_c - 1) most frequent ground-truth object categories (ties
    toward the lower id), ordered by first appearance, then background and
    none-padding as in `select_priors`.
    """
    if n_c < 2:
        raise ConfigError("n_c must be >= 2 (one real slot plus background)")
    counts = Counter(gt.object_category for gt in gts)
    keep = set(
        cat for cat, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: n_c - 1]
    )
    ordered = []
    for gt in gts:
        cat = gt.object_category
        if cat in keep and cat not in ordered:
            ordered.append(cat)
    slots = [CategoryRef.real(cat) for cat in ordered]
    slots.append(BACKGROUND)
    slots.extend([NONE_SLOT] * (n_c - len(slots)))
    return PriorCategories(tuple(slots))
