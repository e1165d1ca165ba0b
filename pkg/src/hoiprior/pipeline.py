"""Full pipeline runs: priors -> feature enhancement -> transformer ->
heads -> assignment -> decoding -> suppression, plus the hyper-parameter
sweep utility.

Query initialization modes: "zeros" (the plain baseline), "caq" (prior
rows tiled over the queries), "oracle" (priors read from ground truth
instead of detections), and two random baselines ("uniform_random" in
[-1, 1], "gaussian_random" with std 1/sqrt(d)). The category-assignment
cost term only applies in the two prior-driven modes, where each query
carries a prior category.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .category_attention import ClamParams, clam_forward
from .errors import ConfigError, ShapeError
from .linalg import LinearLayer, Matrix, Rng, init_linear
from .matching import Assignment, CostWeights, assign_labels
from .postprocess import HOITriplet, decode_triplets, hoi_nms, hoi_softnms
from .priors import (
    EmbeddingTable,
    PriorCategories,
    build_caq,
    embed_priors,
    filter_detections,
    oracle_priors,
    score_categories,
    select_priors,
)
from .scenes import Scene
from .serialize import as_float, as_int, as_str, require_keys
from .transformer import (
    HOIPrediction,
    ModelConfig,
    ModelParams,
    decoder_forward,
    encoder_forward,
    init_model,
    predict_heads,
    spatial_pe,
)

__all__ = [
    "RunConfig",
    "PipelineParams",
    "PipelineResult",
    "init_pipeline_params",
    "run_pipeline",
    "run_scenes",
    "prior_quality",
    "sweep",
    "QUERY_INIT_MODES",
    "NMS_MODES",
]

QUERY_INIT_MODES = ("zeros", "caq", "oracle", "uniform_random", "gaussian_random")
NMS_MODES = ("none", "hard", "soft")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    t_det: float = 0.15
    t_can: float = 0.3
    n_c: int = 4
    v: float = 500.0
    nms_mode: str = "none"
    t_iou: float = 0.5
    sigma: float = 0.5
    seed: int = 0
    query_init_mode: str = "caq"
    clam_enabled: bool = True
    score_threshold: float = 0.0
    drop_category: int | None = None
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self):
        for name in ("t_det", "t_can", "t_iou", "score_threshold"):
            val = getattr(self, name)
            if name != "score_threshold" and not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} {val} outside [0, 1]")
        if self.score_threshold < 0.0:
            raise ConfigError("score_threshold must be nonnegative")
        if self.n_c < 2:
            raise ConfigError("n_c must be >= 2")
        if self.v <= 0.0:
            raise ConfigError("v must be positive")
        if self.sigma <= 0.0:
            raise ConfigError("sigma must be positive")
        if self.query_init_mode not in QUERY_INIT_MODES:
            raise ConfigError(f"query_init_mode must be one of {QUERY_INIT_MODES}")
        if self.nms_mode not in NMS_MODES:
            raise ConfigError(f"nms_mode must be one of {NMS_MODES}")

    def to_json(self):
        return {
            "model": self.model.to_json(),
            "t_det": float(self.t_det),
            "t_can": float(self.t_can),
            "n_c": self.n_c,
            "v": float(self.v),
            "nms_mode": self.nms_mode,
            "t_iou": float(self.t_iou),
            "sigma": float(self.sigma),
            "seed": self.seed,
            "query_init_mode": self.query_init_mode,
            "clam_enabled": self.clam_enabled,
            "score_threshold": float(self.score_threshold),
            "drop_category": self.drop_category,
            "weights": self.weights.to_json(),
        }

    @classmethod
    def from_json(cls, obj, where: str = "config") -> "RunConfig":
        """Missing fields fall back to defaults; unknown fields are rejected."""
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: expected object")
        known = {
            "model", "t_det", "t_can", "n_c", "v", "nms_mode", "t_iou", "sigma",
            "seed", "query_init_mode", "clam_enabled", "score_threshold",
            "drop_category", "weights",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
        kwargs = {}
        if "model" in obj:
            kwargs["model"] = ModelConfig.from_json(obj["model"], f"{where}.model")
        if "weights" in obj:
            kwargs["weights"] = CostWeights.from_json(obj["weights"], f"{where}.weights")
        for name in ("t_det", "t_can", "v", "t_iou", "sigma", "score_threshold"):
            if name in obj:
                kwargs[name] = as_float(obj[name], f"{where}.{name}")
        for name in ("n_c", "seed"):
            if name in obj:
                kwargs[name] = as_int(obj[name], f"{where}.{name}")
        if "drop_category" in obj and obj["drop_category"] is not None:
            kwargs["drop_category"] = as_int(obj["drop_category"], f"{where}.drop_category")
        for name in ("nms_mode", "query_init_mode"):
            if name in obj:
                kwargs[name] = as_str(obj[name], f"{where}.{name}")
        if "clam_enabled" in obj:
            if not isinstance(obj["clam_enabled"], bool):
                raise ConfigError(f"{where}.clam_enabled: expected boolean")
            kwargs["clam_enabled"] = obj["clam_enabled"]
        return cls(**kwargs)


@dataclass(frozen=True)
class PipelineParams:
    """Model weights plus the two prior-side parameter blocks: the word
    embedding projection and the category-attention projection."""

    model: ModelParams
    prior_proj: LinearLayer
    clam: ClamParams


def init_pipeline_params(config: ModelConfig, d_w: int, seed: int) -> PipelineParams:
    """Derive all parameters from one seed: the transformer from `seed`, the
    embedding projection from seed + 1, the attention projection from
    seed + 2."""
    d = config.d_model
    return PipelineParams(
        model=init_model(config, seed),
        prior_proj=init_linear(Rng(seed + 1), d, d_w, 1.0 / math.sqrt(d_w)),
        clam=ClamParams(mlp=init_linear(Rng(seed + 2), d, d, 1.0 / math.sqrt(d))),
    )


@dataclass(frozen=True)
class PipelineResult:
    scene_id: str
    priors: PriorCategories
    prior_of_query: tuple | None
    predictions: tuple[HOIPrediction, ...]
    assignment: Assignment | None
    triplets: tuple[HOITriplet, ...]
    timings: dict

    def to_json(self):
        """Canonical per-scene record; timings vary run to run and stay out."""
        return {
            "id": self.scene_id,
            "priors": self.priors.to_json(),
            "prior_of_query": (
                None if self.prior_of_query is None else [p.to_json() for p in self.prior_of_query]
            ),
            "assignment": (
                None if self.assignment is None else [[g, q] for g, q in self.assignment.pairs]
            ),
            "triplets": [t.to_json() for t in self.triplets],
        }


def _scene_priors(scene: Scene, cfg: RunConfig) -> PriorCategories:
    if cfg.query_init_mode == "oracle":
        return oracle_priors(scene.gts, cfg.n_c)
    kept = filter_detections(scene.detections, cfg.t_det, cfg.drop_category)
    return select_priors(score_categories(kept), cfg.t_can, cfg.n_c)


def _init_queries(
    cfg: RunConfig, params: PipelineParams, table: EmbeddingTable,
    priors: PriorCategories,
) -> tuple[Matrix, tuple | None]:
    """Decoder query initialization plus, in the prior-driven modes, the
    per-query prior category."""
    n_q = cfg.model.n_q
    d = cfg.model.d_model
    mode = cfg.query_init_mode
    if mode in ("caq", "oracle"):
        e = embed_priors(priors, table, params.prior_proj)
        caq = build_caq(e, n_q)
        return caq.q, caq.prior_of_query
    if mode == "zeros":
        return Matrix.zeros(n_q, d), None
    rng = Rng(cfg.seed + 3)
    if mode == "uniform_random":
        q = Matrix([[rng.uniform(-1.0, 1.0) for _ in range(d)] for _ in range(n_q)])
    else:  # gaussian_random
        std = 1.0 / math.sqrt(d)
        q = Matrix([[rng.normal(0.0, std) for _ in range(d)] for _ in range(n_q)])
    return q, None


def run_pipeline(
    scene: Scene,
    table: EmbeddingTable,
    cfg: RunConfig,
    params: PipelineParams,
) -> PipelineResult:
    if scene.feature_grid.features.cols != cfg.model.d_model:
        raise ShapeError(
            f"scene features have dim {scene.feature_grid.features.cols}, "
            f"model expects {cfg.model.d_model}"
        )
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    priors = _scene_priors(scene, cfg)
    timings["priors"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid = scene.feature_grid
    if cfg.clam_enabled:
        e = embed_priors(priors, table, params.prior_proj)
        grid = clam_forward(grid, e, params.clam)
    timings["category_attention"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    s_pe = spatial_pe(grid.h, grid.w, cfg.model.d_model)
    i_enc = encoder_forward(grid, s_pe, params.model)
    timings["encoder"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    q_init, prior_of_query = _init_queries(cfg, params, table, priors)
    q_out = decoder_forward(q_init, params.model.query_pe, i_enc, s_pe, params.model)
    timings["decoder"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    predictions = predict_heads(q_out, params.model)
    timings["heads"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    assignment = assign_labels(
        predictions, scene.gts, prior_of_query, cfg.weights, cfg.v
    )
    timings["matching"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    triplets = decode_triplets(predictions, cfg.score_threshold)
    if cfg.nms_mode == "hard":
        triplets = hoi_nms(triplets, cfg.t_iou)
    elif cfg.nms_mode == "soft":
        triplets = hoi_softnms(triplets, cfg.t_iou, cfg.sigma)
    timings["postprocess"] = time.perf_counter() - t0

    return PipelineResult(
        scene_id=scene.id,
        priors=priors,
        prior_of_query=prior_of_query,
        predictions=tuple(predictions),
        assignment=assignment,
        triplets=tuple(triplets),
        timings=timings,
    )


def run_scenes(
    scenes,
    table: EmbeddingTable,
    cfg: RunConfig,
    params: PipelineParams,
    workers: int = 1,
) -> list[PipelineResult]:
    """Run many scenes; results come back in input order regardless of the
    worker count (every scene run is pure)."""
    scenes = list(scenes)
    if workers <= 1 or len(scenes) <= 1:
        return [run_pipeline(s, table, cfg, params) for s in scenes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_pipeline(s, table, cfg, params), scenes))


def prior_quality(scene: Scene, priors: PriorCategories) -> tuple[float, float]:
    """Image-level recall and precision of the prior slots.

    Recall: fraction of distinct ground-truth object categories that appear
    among the real slots. Precision: fraction of real slots whose category
    is a ground-truth category. Empty reference sets score 1.0 (nothing to
    miss, nothing wrong).
    """
    gt_cats = {gt.object_category for gt in scene.gts}
    real = priors.real_ids()
    recall = (
        1.0 if not gt_cats else sum(1 for c in gt_cats if c in real) / len(gt_cats)
    )
    precision = (
        1.0 if not real else sum(1 for c in real if c in gt_cats) / len(real)
    )
    return recall, precision


def _assignment_accuracy(results, scenes) -> float | None:
    """Pooled fraction of ground truths whose assigned query carries the
    matching prior category; None when queries carry no priors."""
    total = 0
    correct = 0
    for result, scene in zip(results, scenes):
        if result.prior_of_query is None or result.assignment is None:
            return None
        for g, q in result.assignment.pairs:
            total += 1
            prior = result.prior_of_query[q]
            if prior.is_real and prior.category_id == scene.gts[g].object_category:
                correct += 1
    if total == 0:
        return 1.0
    return correct / total


SWEEP_PARAMS = ("t_det", "t_can", "n_c", "t_iou")


def sweep(
    cfg: RunConfig,
    scenes,
    table: EmbeddingTable,
    param: str,
    values,
    params: PipelineParams | None = None,
) -> list[dict]:
    """Vary one hyper-parameter and report quality metrics per setting.

    For the prior-side parameters (t_det, t_can, n_c) each setting reruns
    the pipeline and reports mean image-level prior recall/precision plus
    the category accuracy of the assignment. For t_iou the pipeline runs
    once and both suppression variants are applied per setting, reporting
    how many triplets hard suppression removes and soft suppression decays.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    scenes = list(scenes)
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    if param == "t_iou":
        if params is None:
            params = init_pipeline_params(cfg.model, table.dim, cfg.seed)
        base_cfg = replace(cfg, nms_mode="none")
        results = run_scenes(scenes, table, base_cfg, params)
        all_triplets = [list(r.triplets) for r in results]
        for value in values:
            suppressed = 0
            decayed = 0
            for triplets in all_triplets:
                kept = hoi_nms(triplets, value)
                suppressed += len(triplets) - len(kept)
                soft = hoi_softnms(triplets, value, cfg.sigma)
                before = Counter(t.score for t in triplets)
                after = Counter(t.score for t in soft)
                decayed += sum((after - before).values())
            rows.append(
                {
                    "param": "t_iou",
                    "value": value,
                    "suppressed_hard": suppressed,
                    "decayed_soft": decayed,
                }
            )
        return rows
    for value in values:
        if param == "n_c":
            run_cfg = replace(cfg, n_c=int(value))
        else:
            run_cfg = replace(cfg, **{param: float(value)})
        run_params = params or init_pipeline_params(run_cfg.model, table.dim, run_cfg.seed)
        results = run_scenes(scenes, table, run_cfg, run_params)
        recalls, precisions = [], []
        for scene, result in zip(scenes, results):
            recall, precision = prior_quality(scene, result.priors)
            recalls.append(recall)
            precisions.append(precision)
        row = {
            "param": param,
            "value": value,
            "prior_recall": float(np.mean(recalls)) if recalls else 1.0,
            "prior_precision": float(np.mean(precisions)) if precisions else 1.0,
            "assignment_accuracy": _assignment_accuracy(results, scenes),
        }
        rows.append(row)
    return rows
