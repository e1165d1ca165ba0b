"""Synthetic scenes: seeded stand-ins for an image, its detector outputs,
and its interaction annotations.

Generation runs entirely on the portable splitmix64 stream, so a seed
pins every byte of the scene on any platform. Detector records mirror the
ground-truth objects with noise-scaled confidence drop and box jitter,
plus a few spurious low-confidence records that sit below the default
detection threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import cxcywh_to_xyxy
from .category_attention import FeatureGrid
from .errors import ConfigError, SchemaError
from .linalg import Matrix, Rng
from .matching import GroundTruthTriplet
from .priors import DetectionRecord, EmbeddingTable
from .serialize import as_float, as_int, as_list, as_str, require_keys

__all__ = ["Scene", "SceneParams", "synth_scene", "synth_embedding_table"]


@dataclass(frozen=True)
class Scene:
    """One unit of work for the pipeline: features, detections, annotations."""

    id: str
    k_obj: int
    k_verb: int
    feature_grid: FeatureGrid
    detections: tuple[DetectionRecord, ...]
    gts: tuple[GroundTruthTriplet, ...]

    def __post_init__(self):
        if self.k_obj < 1 or self.k_verb < 1:
            raise ConfigError("category counts must be >= 1")
        for det in self.detections:
            if det.category_id >= self.k_obj:
                raise ValueError(f"detection category {det.category_id} outside [0, {self.k_obj})")
        for gt in self.gts:
            if gt.object_category >= self.k_obj:
                raise ValueError(f"gt category {gt.object_category} outside [0, {self.k_obj})")
            if max(gt.verbs) >= self.k_verb:
                raise ValueError("gt verb id outside verb count")
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "gts", tuple(self.gts))

    def to_json(self):
        return {
            "id": self.id,
            "k_obj": self.k_obj,
            "k_verb": self.k_verb,
            "h": self.feature_grid.h,
            "w": self.feature_grid.w,
            "features": self.feature_grid.features.tolist(),
            "detections": [d.to_json() for d in self.detections],
            "gts": [g.to_json() for g in self.gts],
        }

    @classmethod
    def from_json(cls, obj, where: str = "scene") -> "Scene":
        require_keys(
            obj, {"id", "k_obj", "k_verb", "h", "w", "features", "detections", "gts"}, where
        )
        h = as_int(obj["h"], f"{where}.h")
        w = as_int(obj["w"], f"{where}.w")
        rows = as_list(obj["features"], f"{where}.features")
        if len(rows) != h * w:
            raise SchemaError(f"{where}.features: expected {h * w} rows")
        features = [[as_float(v, f"{where}.features") for v in as_list(r, f"{where}.features")] for r in rows]
        return cls(
            id=as_str(obj["id"], f"{where}.id"),
            k_obj=as_int(obj["k_obj"], f"{where}.k_obj"),
            k_verb=as_int(obj["k_verb"], f"{where}.k_verb"),
            feature_grid=FeatureGrid(h=h, w=w, features=Matrix(features)),
            detections=tuple(
                DetectionRecord.from_json(d, f"{where}.detections[{i}]")
                for i, d in enumerate(as_list(obj["detections"], f"{where}.detections"))
            ),
            gts=tuple(
                GroundTruthTriplet.from_json(g, f"{where}.gts[{i}]")
                for i, g in enumerate(as_list(obj["gts"], f"{where}.gts"))
            ),
        )


@dataclass(frozen=True)
class SceneParams:
    k_obj: int = 8
    k_verb: int = 6
    n_gt: int = 3
    h: int = 4
    w: int = 4
    detector_noise: float = 0.0
    d_model: int = 256  # feature dimension; must match the model config

    def __post_init__(self):
        if min(self.k_obj, self.k_verb, self.h, self.w, self.d_model) < 1:
            raise ConfigError("scene counts must be >= 1")
        if self.n_gt < 0:
            raise ConfigError("n_gt must be >= 0")
        if not 0.0 <= self.detector_noise <= 1.0:
            raise ConfigError("detector_noise must lie in [0, 1]")


def _random_cxcywh(rng: Rng) -> tuple[float, float, float, float]:
    """A box whose corner form also stays inside the unit square."""
    w = rng.uniform(0.05, 0.4)
    h = rng.uniform(0.05, 0.4)
    cx = rng.uniform(w / 2.0, 1.0 - w / 2.0)
    cy = rng.uniform(h / 2.0, 1.0 - h / 2.0)
    return (cx, cy, w, h)


def _distinct_verbs(rng: Rng, k_verb: int) -> frozenset[int]:
    count = rng.randint(1, min(3, k_verb))
    verbs: set[int] = set()
    while len(verbs) < count:
        verbs.add(rng.randint(0, k_verb - 1))
    return frozenset(verbs)


def _jitter_xyxy(rng: Rng, box, amount: float) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (v + amount * rng.uniform(-1.0, 1.0) for v in box)
    x1, x2 = min(x1, x2), max(x1, x2)
    y1, y2 = min(y1, y2), max(y1, y2)
    x1 = min(max(x1, 0.0), 0.98)
    y1 = min(max(y1, 0.0), 0.98)
    x2 = min(max(x2, x1 + 0.01), 1.0)
    y2 = min(max(y2, y1 + 0.01), 1.0)
    return (x1, y1, x2, y2)


def synth_scene(seed: int, params: SceneParams = SceneParams()) -> Scene:
    """Deterministic scene: annotations, mirrored detector records with
    noise-controlled degradation, spurious records, and a random feature
    grid. `detector_noise` = 0 reproduces every ground-truth object as a
    confidence-1 record with its exact box."""
    rng = Rng(seed)
    gts = []
    for _ in range(params.n_gt):
        gts.append(
            GroundTruthTriplet(
                b_h=_random_cxcywh(rng),
                b_o=_random_cxcywh(rng),
                object_category=rng.randint(0, params.k_obj - 1),
                verbs=_distinct_verbs(rng, params.k_verb),
            )
        )
    detections = []
    for gt in gts:
        confidence = min(max(1.0 - params.detector_noise * rng.next_float(), 0.0), 1.0)
        box = _jitter_xyxy(rng, cxcywh_to_xyxy(gt.b_o), 0.05 * params.detector_noise)
        detections.append(
            DetectionRecord(category_id=gt.object_category, confidence=confidence, box=box)
        )
    # Spurious records stay under the default detection threshold of 0.15.
    for _ in range(rng.randint(1, 3)):
        detections.append(
            DetectionRecord(
                category_id=rng.randint(0, params.k_obj - 1),
                confidence=rng.uniform(0.02, 0.14),
                box=_jitter_xyxy(rng, _random_cxcywh_corners(rng), 0.0),
            )
        )
    n_loc = params.h * params.w
    features = np.empty((n_loc, params.d_model))
    for i in range(n_loc):
        for j in range(params.d_model):
            features[i, j] = rng.uniform(-1.0, 1.0)
    return Scene(
        id=f"scene-{seed}",
        k_obj=params.k_obj,
        k_verb=params.k_verb,
        feature_grid=FeatureGrid(h=params.h, w=params.w, features=Matrix(features)),
        detections=tuple(detections),
        gts=tuple(gts),
    )


def _random_cxcywh_corners(rng: Rng) -> tuple[float, float, float, float]:
    return cxcywh_to_xyxy(_random_cxcywh(rng))


def synth_embedding_table(seed: int, k_obj: int, d_w: int) -> EmbeddingTable:
    """Unit-norm pseudo-random word vectors for every category plus the
    background placeholder."""
    if d_w < 2:
        raise ConfigError("embedding dimension must be >= 2")
    if k_obj < 1:
        raise ConfigError("k_obj must be >= 1")
    rng = Rng(seed)

    def unit_vector() -> np.ndarray:
        vec = np.array([rng.normal() for _ in range(d_w)])
        norm = float(np.linalg.norm(vec))
        while norm < 1e-12:  # astronomically unlikely; redraw keeps the contract
            vec = np.array([rng.normal() for _ in range(d_w)])
            norm = float(np.linalg.norm(vec))
        return vec / norm

    entries = {cat: unit_vector() for cat in range(k_obj)}
    background = unit_vector()
    return EmbeddingTable(dim=d_w, entries=entries, background_vector=background)
