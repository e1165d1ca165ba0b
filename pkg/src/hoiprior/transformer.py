"""Toy-scale set-prediction transformer: encoder, decoder, prediction heads.

Sizes follow the usual detection-transformer defaults (256-dim model, 8
heads, 6+6 layers, 100 queries) but every count is configurable down to
desk scale. Positional encodings are added to queries and keys only, never
to values; residual + layer-norm runs post-attention and post-FFN.

The attention internals are written so that permuting tokens (with their
positional rows) or queries (with their positional rows) permutes the
output bitwise: per-row GEMV for projections, fixed-order reductions over
the feature axis for scores, and sorted sums over the token axis for the
softmax normalizer and the value mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .category_attention import FeatureGrid
from .errors import ConfigError, SchemaError, ShapeError
from .linalg import LinearLayer, Matrix, Rng, init_linear, sorted_sum
from .serialize import as_float, as_int, as_list, require_keys

__all__ = [
    "ModelConfig",
    "SpatialPE",
    "QueryPE",
    "HOIPrediction",
    "AttentionParams",
    "EncoderLayerParams",
    "DecoderLayerParams",
    "HeadParams",
    "ModelParams",
    "spatial_pe",
    "init_model",
    "encoder_forward",
    "decoder_forward",
    "predict_heads",
    "params_to_json",
    "params_from_json",
]

PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 256
    n_heads: int = 8
    n_enc: int = 6
    n_dec: int = 6
    n_q: int = 100
    ffn_dim: int = 512
    k_obj: int = 80
    k_verb: int = 117

    def __post_init__(self):
        if min(self.d_model, self.n_heads, self.n_q, self.ffn_dim, self.k_obj, self.k_verb) < 1:
            raise ConfigError("model dimensions and category counts must be >= 1")
        # Zero encoder/decoder layers are allowed: the stack is then identity.
        if self.n_enc < 0 or self.n_dec < 0:
            raise ConfigError("layer counts must be >= 0")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    def to_json(self):
        return {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_enc": self.n_enc,
            "n_dec": self.n_dec,
            "n_q": self.n_q,
            "ffn_dim": self.ffn_dim,
            "k_obj": self.k_obj,
            "k_verb": self.k_verb,
        }

    @classmethod
    def from_json(cls, obj, where: str = "model config") -> "ModelConfig":
        require_keys(
            obj,
            {"d_model", "n_heads", "n_enc", "n_dec", "n_q", "ffn_dim", "k_obj", "k_verb"},
            where,
        )
        return cls(**{k: as_int(v, f"{where}.{k}") for k, v in obj.items()})


@dataclass(frozen=True)
class SpatialPE:
    """Fixed 2-D sinusoidal positional encoding, one row per location."""

    h: int
    w: int
    pe: Matrix


@dataclass(frozen=True)
class QueryPE:
    """Learnable-style per-query positional rows (seeded random here)."""

    pe: Matrix


@dataclass(frozen=True)
class HOIPrediction:
    """Raw head outputs for one query: boxes in center form, an object-class
    distribution with a trailing no-object slot, and per-verb scores."""

    b_h: tuple[float, float, float, float]  # cx, cy, w, h in (0, 1)
    b_o: tuple[float, float, float, float]
    c_o: np.ndarray  # k_obj + 1 probabilities, last is no-object
    c_v: np.ndarray  # per-verb scores in (0, 1)

    def __post_init__(self):
        for box in (self.b_h, self.b_o):
            if len(box) != 4 or not all(0.0 < v < 1.0 for v in box):
                raise ValueError(f"box components must lie in (0, 1): {box}")
        c_o = np.asarray(self.c_o, dtype=np.float64)
        c_v = np.asarray(self.c_v, dtype=np.float64)
        if abs(float(np.sum(c_o)) - 1.0) > 1e-9:
            raise ValueError("object-class distribution must sum to 1")
        if np.any(c_o < 0.0):
            raise ValueError("object-class probabilities must be nonnegative")
        # closed bounds: float sigmoids saturate, and hand-built perfect
        # predictions legitimately use exact 0/1 verb scores
        if np.any(c_v < 0.0) or np.any(c_v > 1.0):
            raise ValueError("verb scores must lie in [0, 1]")
        c_o.flags.writeable = False
        c_v.flags.writeable = False
        object.__setattr__(self, "b_h", tuple(float(v) for v in self.b_h))
        object.__setattr__(self, "b_o", tuple(float(v) for v in self.b_o))
        object.__setattr__(self, "c_o", c_o)
        object.__setattr__(self, "c_v", c_v)

    def to_json(self):
        return {
            "b_h": [float(v) for v in self.b_h],
            "b_o": [float(v) for v in self.b_o],
            "c_o": [float(v) for v in self.c_o],
            "c_v": [float(v) for v in self.c_v],
        }

    @classmethod
    def from_json(cls, obj, where: str = "prediction") -> "HOIPrediction":
        require_keys(obj, {"b_h", "b_o", "c_o", "c_v"}, where)
        def nums(key):
            return [as_float(v, f"{where}.{key}") for v in as_list(obj[key], f"{where}.{key}")]
        return cls(
            b_h=tuple(nums("b_h")),
            b_o=tuple(nums("b_o")),
            c_o=np.asarray(nums("c_o")),
            c_v=np.asarray(nums("c_v")),
        )


@dataclass(frozen=True)
class AttentionParams:
    wq: LinearLayer
    wk: LinearLayer
    wv: LinearLayer
    wo: LinearLayer


@dataclass(frozen=True)
class NormParams:
    gain: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=np.float64).copy()
        bias = np.asarray(self.bias, dtype=np.float64).copy()
        gain.flags.writeable = False
        bias.flags.writeable = False
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "bias", bias)


@dataclass(frozen=True)
class EncoderLayerParams:
    attn: AttentionParams
    norm1: NormParams
    ffn1: LinearLayer
    ffn2: LinearLayer
    norm2: NormParams


@dataclass(frozen=True)
class DecoderLayerParams:
    self_attn: AttentionParams
    norm1: NormParams
    cross_attn: AttentionParams
    norm2: NormParams
    ffn1: LinearLayer
    ffn2: LinearLayer
    norm3: NormParams


@dataclass(frozen=True)
class HeadParams:
    human_box: tuple[LinearLayer, LinearLayer, LinearLayer]
    object_box: tuple[LinearLayer, LinearLayer, LinearLayer]
    object_class: LinearLayer  # d_model -> k_obj + 1
    verb_class: LinearLayer  # d_model -> k_verb


@dataclass(frozen=True)
class ModelParams:
    config: ModelConfig
    query_pe: QueryPE
    enc_layers: tuple[EncoderLayerParams, ...]
    dec_layers: tuple[DecoderLayerParams, ...]
    heads: HeadParams


def spatial_pe(h: int, w: int, d: int) -> SpatialPE:
    """2-D sinusoid: the first half of the dims encodes the row index, the
    second half the column index, each as interleaved sin/cos ladders."""
    if d % 4 != 0:
        raise ConfigError(f"positional encoding needs d divisible by 4, got {d}")
    quarter = d // 4
    freq = 10000.0 ** (np.arange(quarter) / quarter)
    ys, xs = np.divmod(np.arange(h * w), w)
    pe = np.empty((h * w, d))
    half = d // 2
    pe[:, 0:half:2] = np.sin(ys[:, None] / freq)
    pe[:, 1:half:2] = np.cos(ys[:, None] / freq)
    pe[:, half::2] = np.sin(xs[:, None] / freq)
    pe[:, half + 1 :: 2] = np.cos(xs[:, None] / freq)
    return SpatialPE(h=h, w=w, pe=Matrix(pe))


def _init_attention(rng: Rng, d: int) -> AttentionParams:
    scale = 1.0 / math.sqrt(d)
    return AttentionParams(
        wq=init_linear(rng, d, d, scale),
        wk=init_linear(rng, d, d, scale),
        wv=init_linear(rng, d, d, scale),
        wo=init_linear(rng, d, d, scale),
    )


def _init_norm(d: int) -> NormParams:
    return NormParams(gain=np.ones(d), bias=np.zeros(d))


def _init_box_head(rng: Rng, d: int) -> tuple[LinearLayer, LinearLayer, LinearLayer]:
    scale = 1.0 / math.sqrt(d)
    return (
        init_linear(rng, d, d, scale),
        init_linear(rng, d, d, scale),
        init_linear(rng, 4, d, scale),
    )


def init_model(config: ModelConfig, seed: int) -> ModelParams:
    """Draw all parameters from one seeded stream, in a fixed order."""
    rng = Rng(seed)
    d = config.d_model
    query_pe = QueryPE(pe=init_linear(rng, config.n_q, d, 1.0 / math.sqrt(d)).weight)
    enc = []
    for _ in range(config.n_enc):
        enc.append(
            EncoderLayerParams(
                attn=_init_attention(rng, d),
                norm1=_init_norm(d),
                ffn1=init_linear(rng, config.ffn_dim, d, 1.0 / math.sqrt(d)),
                ffn2=init_linear(rng, d, config.ffn_dim, 1.0 / math.sqrt(config.ffn_dim)),
                norm2=_init_norm(d),
            )
        )
    dec = []
    for _ in range(config.n_dec):
        dec.append(
            DecoderLayerParams(
                self_attn=_init_attention(rng, d),
                norm1=_init_norm(d),
                cross_attn=_init_attention(rng, d),
                norm2=_init_norm(d),
                ffn1=init_linear(rng, config.ffn_dim, d, 1.0 / math.sqrt(d)),
                ffn2=init_linear(rng, d, config.ffn_dim, 1.0 / math.sqrt(config.ffn_dim)),
                norm3=_init_norm(d),
            )
        )
    heads = HeadParams(
        human_box=_init_box_head(rng, d),
        object_box=_init_box_head(rng, d),
        object_class=init_linear(rng, config.k_obj + 1, d, 1.0 / math.sqrt(d)),
        verb_class=init_linear(rng, config.k_verb, d, 1.0 / math.sqrt(d)),
    )
    return ModelParams(
        config=config,
        query_pe=query_pe,
        enc_layers=tuple(enc),
        dec_layers=tuple(dec),
        heads=heads,
    )


def _linear(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    """Row-by-row affine map; each output row depends only on its input row."""
    w = layer.weight.array
    out = np.empty((x.shape[0], w.shape[0]))
    for i in range(x.shape[0]):
        out[i] = np.dot(w, x[i])
    out += layer.bias
    return out


def _layer_norm(x: np.ndarray, norm: NormParams, eps: float = 1e-5) -> np.ndarray:
    mu = np.mean(x, axis=1, keepdims=True)
    centered = x - mu
    var = np.mean(centered * centered, axis=1, keepdims=True)
    return centered / np.sqrt(var + eps) * norm.gain + norm.bias


def _attention(
    q_in: np.ndarray,
    k_in: np.ndarray,
    v_in: np.ndarray,
    params: AttentionParams,
    n_heads: int,
) -> np.ndarray:
    """Multi-head scaled dot-product attention with order-stable reductions."""
    d = q_in.shape[1]
    d_head = d // n_heads
    q = _linear(params.wq, q_in)
    k = _linear(params.wk, k_in)
    v = _linear(params.wv, v_in)
    out = np.empty((q_in.shape[0], d))
    inv_sqrt = 1.0 / math.sqrt(d_head)
    for h in range(n_heads):
        sl = slice(h * d_head, (h + 1) * d_head)
        qh, kh, vh = q[:, sl], k[:, sl], v[:, sl]
        scores = np.sum(qh[:, None, :] * kh[None, :, :], axis=-1) * inv_sqrt
        shifted = scores - np.max(scores, axis=1, keepdims=True)
        exps = np.exp(shifted)
        weights = exps / sorted_sum(exps, axis=1)[:, None]
        out[:, sl] = sorted_sum(weights[:, :, None] * vh[None, :, :], axis=1)
    return _linear(params.wo, out)


def encoder_forward(grid: FeatureGrid, pe: SpatialPE, params: ModelParams) -> Matrix:
    """Self-attention stack over the flattened feature grid."""
    if pe.pe.rows != grid.features.rows or pe.pe.cols != grid.features.cols:
        raise ShapeError("positional encoding shape does not match features")
    x = grid.features.array
    for layer in params.enc_layers:
        qk = x + pe.pe.array
        x = _layer_norm(x + _attention(qk, qk, x, layer.attn, params.config.n_heads), layer.norm1)
        ff = _linear(layer.ffn2, np.maximum(_linear(layer.ffn1, x), 0.0))
        x = _layer_norm(x + ff, layer.norm2)
    return Matrix(x)


def decoder_forward(
    q_init: Matrix,
    q_pe: QueryPE,
    i_enc: Matrix,
    s_pe: SpatialPE,
    params: ModelParams,
) -> Matrix:
    """Query self-attention plus cross-attention into the encoded features."""
    if q_pe.pe.rows != q_init.rows or q_pe.pe.cols != q_init.cols:
        raise ShapeError("query positional encoding shape does not match queries")
    if s_pe.pe.rows != i_enc.rows or s_pe.pe.cols != i_enc.cols:
        raise ShapeError("spatial positional encoding shape does not match memory")
    if q_init.cols != i_enc.cols:
        raise ShapeError("query and memory dimensions differ")
    x = q_init.array
    mem = i_enc.array
    mem_k = mem + s_pe.pe.array
    n_heads = params.config.n_heads
    for layer in params.dec_layers:
        qk = x + q_pe.pe.array
        x = _layer_norm(x + _attention(qk, qk, x, layer.self_attn, n_heads), layer.norm1)
        ca = _attention(x + q_pe.pe.array, mem_k, mem, layer.cross_attn, n_heads)
        x = _layer_norm(x + ca, layer.norm2)
        ff = _linear(layer.ffn2, np.maximum(_linear(layer.ffn1, x), 0.0))
        x = _layer_norm(x + ff, layer.norm3)
    return Matrix(x)


def _box_head(layers, x: np.ndarray) -> np.ndarray:
    h = np.maximum(_linear(layers[0], x), 0.0)
    h = np.maximum(_linear(layers[1], h), 0.0)
    return _linear(layers[2], h)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def predict_heads(q_out: Matrix, params: ModelParams) -> list[HOIPrediction]:
    """Run the four heads on every output query.

    Boxes go through 3-layer MLPs and a sigmoid; the object head is a single
    affine map softmaxed over the real classes plus the no-object slot; the
    verb head is a single affine map through a sigmoid.
    """
    if q_out.cols != params.config.d_model:
        raise ShapeError("query dimension does not match model")
    x = q_out.array
    bh = _stable_sigmoid(_box_head(params.heads.human_box, x))
    bo = _stable_sigmoid(_box_head(params.heads.object_box, x))
    logits = _linear(params.heads.object_class, x)
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    exps = np.exp(shifted)
    c_o = exps / np.sum(exps, axis=1, keepdims=True)
    c_v = _stable_sigmoid(_linear(params.heads.verb_class, x))
    return [
        HOIPrediction(b_h=tuple(bh[i]), b_o=tuple(bo[i]), c_o=c_o[i], c_v=c_v[i])
        for i in range(x.shape[0])
    ]


def _linear_to_json(layer: LinearLayer):
    return {"weight": layer.weight.tolist(), "bias": layer.bias.tolist()}


def _linear_from_json(obj, where: str) -> LinearLayer:
    require_keys(obj, {"weight", "bias"}, where)
    return LinearLayer(weight=Matrix(obj["weight"]), bias=np.asarray(obj["bias"], dtype=np.float64))


def _norm_to_json(norm: NormParams):
    return {"gain": norm.gain.tolist(), "bias": norm.bias.tolist()}


def _norm_from_json(obj, where: str) -> NormParams:
    require_keys(obj, {"gain", "bias"}, where)
    return NormParams(gain=np.asarray(obj["gain"]), bias=np.asarray(obj["bias"]))


def _attn_to_json(attn: AttentionParams):
    return {name: _linear_to_json(getattr(attn, name)) for name in ("wq", "wk", "wv", "wo")}


def _attn_from_json(obj, where: str) -> AttentionParams:
    require_keys(obj, {"wq", "wk", "wv", "wo"}, where)
    return AttentionParams(**{k: _linear_from_json(obj[k], f"{where}.{k}") for k in obj})


def params_to_json(params: ModelParams):
    """Single-blob JSON layout: version + config header, then all weights."""
    return {
        "version": PARAMS_FORMAT_VERSION,
        "config": params.config.to_json(),
        "query_pe": params.query_pe.pe.tolist(),
        "encoder": [
            {
                "attn": _attn_to_json(layer.attn),
                "norm1": _norm_to_json(layer.norm1),
                "ffn1": _linear_to_json(layer.ffn1),
                "ffn2": _linear_to_json(layer.ffn2),
                "norm2": _norm_to_json(layer.norm2),
            }
            for layer in params.enc_layers
        ],
        "decoder": [
            {
                "self_attn": _attn_to_json(layer.self_attn),
                "norm1": _norm_to_json(layer.norm1),
                "cross_attn": _attn_to_json(layer.cross_attn),
                "norm2": _norm_to_json(layer.norm2),
                "ffn1": _linear_to_json(layer.ffn1),
                "ffn2": _linear_to_json(layer.ffn2),
                "norm3": _norm_to_json(layer.norm3),
            }
            for layer in params.dec_layers
        ],
        "heads": {
            "human_box": [_linear_to_json(l) for l in params.heads.human_box],
            "object_box": [_linear_to_json(l) for l in params.heads.object_box],
            "object_class": _linear_to_json(params.heads.object_class),
            "verb_class": _linear_to_json(params.heads.verb_class),
        },
    }


def params_from_json(obj) -> ModelParams:
    require_keys(obj, {"version", "config", "query_pe", "encoder", "decoder", "heads"}, "params")
    version = as_int(obj["version"], "params.version")
    if version != PARAMS_FORMAT_VERSION:
        raise SchemaError(f"unsupported params version {version}")
    config = ModelConfig.from_json(obj["config"], "params.config")
    enc = []
    for i, layer in enumerate(as_list(obj["encoder"], "params.encoder")):
        where = f"params.encoder[{i}]"
        require_keys(layer, {"attn", "norm1", "ffn1", "ffn2", "norm2"}, where)
        enc.append(
            EncoderLayerParams(
                attn=_attn_from_json(layer["attn"], f"{where}.attn"),
                norm1=_norm_from_json(layer["norm1"], f"{where}.norm1"),
                ffn1=_linear_from_json(layer["ffn1"], f"{where}.ffn1"),
                ffn2=_linear_from_json(layer["ffn2"], f"{where}.ffn2"),
                norm2=_norm_from_json(layer["norm2"], f"{where}.norm2"),
            )
        )
    dec = []
    for i, layer in enumerate(as_list(obj["decoder"], "params.decoder")):
        where = f"params.decoder[{i}]"
        require_keys(
            layer, {"self_attn", "norm1", "cross_attn", "norm2", "ffn1", "ffn2", "norm3"}, where
        )
        dec.append(
            DecoderLayerParams(
                self_attn=_attn_from_json(layer["self_attn"], f"{where}.self_attn"),
                norm1=_norm_from_json(layer["norm1"], f"{where}.norm1"),
                cross_attn=_attn_from_json(layer["cross_attn"], f"{where}.cross_attn"),
                norm2=_norm_from_json(layer["norm2"], f"{where}.norm2"),
                ffn1=_linear_from_json(layer["ffn1"], f"{where}.ffn1"),
                ffn2=_linear_from_json(layer["ffn2"], f"{where}.ffn2"),
                norm3=_norm_from_json(layer["norm3"], f"{where}.norm3"),
            )
        )
    heads_obj = require_keys(
        obj["heads"], {"human_box", "object_box", "object_class", "verb_class"}, "params.heads"
    )
    def box_head(key):
        layers = as_list(heads_obj[key], f"params.heads.{key}")
        if len(layers) != 3:
            raise SchemaError(f"params.heads.{key}: expected 3 layers")
        return tuple(_linear_from_json(l, f"params.heads.{key}[{i}]") for i, l in enumerate(layers))
    heads = HeadParams(
        human_box=box_head("human_box"),
        object_box=box_head("object_box"),
        object_class=_linear_from_json(heads_obj["object_class"], "params.heads.object_class"),
        verb_class=_linear_from_json(heads_obj["verb_class"], "params.heads.verb_class"),
    )
    if len(enc) != config.n_enc or len(dec) != config.n_dec:
        raise SchemaError("layer counts do not match config header")
    return ModelParams(
        config=config,
        query_pe=QueryPE(pe=Matrix(obj["query_pe"])),
        enc_layers=tuple(enc),
        dec_layers=tuple(dec),
        heads=heads,
    )
