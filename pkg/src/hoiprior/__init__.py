"""Desk-scale interaction-detection pipeline with category-prior queries."""

from .category_attention import ClamParams, FeatureGrid, attention_weights, clam_forward, enhance
from .evaluation import EvalResult, HOICategory, average_precision, evaluate_scenes, match_predictions, role_map
from .linalg import LinearLayer, Matrix, Rng, init_linear, layer_norm, matmul, sigmoid, softmax_rows
from .matching import (
    Assignment,
    CostMatrix,
    CostWeights,
    GroundTruthTriplet,
    assign_labels,
    base_cost,
    external_cost,
    hungarian,
)
from .pipeline import (
    PipelineParams,
    PipelineResult,
    RunConfig,
    init_pipeline_params,
    prior_quality,
    run_pipeline,
    run_scenes,
    sweep,
)
from .postprocess import HOITriplet, decode_triplets, hoi_nms, hoi_softnms, iou_hoi
from .priors import (
    BACKGROUND,
    NONE_SLOT,
    CategoryAwareQuery,
    CategoryRef,
    DetectionRecord,
    EmbeddingTable,
    PriorCategories,
    PriorEmbeddings,
    build_caq,
    embed_priors,
    filter_detections,
    oracle_priors,
    score_categories,
    select_priors,
)
from .scenes import Scene, SceneParams, synth_embedding_table, synth_scene
from .transformer import (
    HOIPrediction,
    ModelConfig,
    ModelParams,
    QueryPE,
    SpatialPE,
    decoder_forward,
    encoder_forward,
    init_model,
    params_from_json,
    params_to_json,
    predict_heads,
    spatial_pe,
)

__version__ = "0.1.0"
