"""Category-level attention over visual features.

Each spatial location scores every prior-category embedding against its own
projected feature, softmaxes the scores, and adds the weighted mixture of
prior embeddings back onto the feature. The added vector is a convex
combination of the prior rows, which the tests exploit.

Reductions over the prior-slot axis are sorted sums, so permuting the slots
(and the embedding rows with them) leaves the output bitwise unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import LinearLayer, Matrix, softmax_rows, sorted_sum
from .priors import PriorEmbeddings

__all__ = ["FeatureGrid", "ClamParams", "attention_weights", "enhance", "clam_forward"]


@dataclass(frozen=True)
class FeatureGrid:
    """Flattened h x w visual feature map, one row per location."""

    h: int
    w: int
    features: Matrix

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ShapeError("grid dimensions must be >= 1")
        if self.features.rows != self.h * self.w:
            raise ShapeError(
                f"features have {self.features.rows} rows, expected {self.h * self.w}"
            )


@dataclass(frozen=True)
class ClamParams:
    """Single affine map taking features into the embedding space."""

    mlp: LinearLayer

    def __post_init__(self):
        if self.mlp.in_dim != self.mlp.out_dim:
            raise ShapeError("category-attention projection must be square")


def attention_weights(grid: FeatureGrid, e: PriorEmbeddings, params: ClamParams) -> Matrix:
    """Per-location softmax over dot-product similarities with prior rows."""
    if params.mlp.in_dim != grid.features.cols:
        raise ShapeError("projection dimension does not match feature dimension")
    if e.e.cols != params.mlp.out_dim:
        raise ShapeError("embedding dimension does not match projection output")
    projected = params.mlp.apply_rows(grid.features)
    # Elementwise product + fixed-order reduction over the feature axis keeps
    # each logit independent of where its location/slot sits in the matrix.
    logits = np.sum(projected.array[:, None, :] * e.e.array[None, :, :], axis=-1)
    return softmax_rows(Matrix(logits))


def enhance(grid: FeatureGrid, w_att: Matrix, e: PriorEmbeddings) -> FeatureGrid:
    """Add the attention-weighted mixture of prior rows to every location."""
    if w_att.rows != grid.features.rows:
        raise ShapeError("attention rows must match grid locations")
    if w_att.cols != e.e.rows:
        raise ShapeError("attention columns must match prior slot count")
    terms = w_att.array[:, :, None] * e.e.array[None, :, :]
    mixture = sorted_sum(terms, axis=1)
    return FeatureGrid(h=grid.h, w=grid.w, features=Matrix(grid.features.array + mixture))


def clam_forward(grid: FeatureGrid, e: PriorEmbeddings, params: ClamParams) -> FeatureGrid:
    return enhance(grid, attention_weights(grid, e, params), e)
