"""Dense double-precision matrix substrate.

Everything downstream (priors, attention, transformer, matching) stores its
numbers in :class:`Matrix` and draws its parameters through :class:`Rng`, so
determinism and finiteness are enforced in one place.

Reductions that run along an axis whose element order may legitimately vary
between runs (token order, prior-slot order) go through :func:`sorted_sum`,
which sums in ascending value order. The result then depends only on the
multiset of summands, which is what makes the permutation-equivariance
guarantees of the attention modules bitwise instead of approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "Matrix",
    "LinearLayer",
    "Rng",
    "matmul",
    "softmax_rows",
    "sigmoid",
    "layer_norm",
    "init_linear",
    "sorted_sum",
]


class Matrix:
    """Immutable 2-D float64 matrix, row-major storage.

    The wrapped array is copied on construction, checked for finiteness and
    marked read-only; `data` exposes the flat row-major view.
    """

    __slots__ = ("array",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix contains non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(np.zeros((rows, cols)))

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self.array.reshape(-1)

    def row(self, i: int) -> np.ndarray:
        return self.array[i]

    def tolist(self) -> list:
        return self.array.tolist()

    def __eq__(self, other) -> bool:
        return isinstance(other, Matrix) and np.array_equal(self.array, other.array)

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class LinearLayer:
    """Affine map y = W x + b with W of shape (out, in)."""

    weight: Matrix
    bias: np.ndarray

    def __post_init__(self):
        bias = np.asarray(self.bias, dtype=np.float64)
        if bias.ndim != 1 or bias.shape[0] != self.weight.rows:
            raise ShapeError(
                f"bias length {bias.shape} does not match weight rows {self.weight.rows}"
            )
        if not np.all(np.isfinite(bias)):
            raise ValueError("bias contains non-finite entries")
        bias = bias.copy()
        bias.flags.writeable = False
        object.__setattr__(self, "bias", bias)

    @property
    def out_dim(self) -> int:
        return self.weight.rows

    @property
    def in_dim(self) -> int:
        return self.weight.cols

    def apply_vector(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.in_dim,):
            raise ShapeError(f"expected vector of length {self.in_dim}, got {v.shape}")
        return np.dot(self.weight.array, v) + self.bias

    def apply_rows(self, m: Matrix) -> Matrix:
        """Apply the map to every row of `m` independently.

        Row-by-row GEMV keeps each output row a function of its own input row
        only, so permuting input rows permutes output rows bitwise.
        """
        if m.cols != self.in_dim:
            raise ShapeError(f"expected {self.in_dim} columns, got {m.cols}")
        wt = self.weight.array
        out = np.empty((m.rows, self.out_dim))
        for i in range(m.rows):
            out[i] = np.dot(wt, m.array[i])
        out += self.bias
        return Matrix(out)


class Rng:
    """splitmix64 pseudo-random generator.

    State transition (all arithmetic mod 2**64):

        state += 0x9E3779B97F4A7C15
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        output = z ^ (z >> 31)

    `next_float` maps the top 53 bits to [0, 1): (output >> 11) * 2**-53.
    The stream is a pure function of the seed, identical on every platform,
    so fixtures generated here can be reproduced anywhere.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def next_u64_array(self, n: int) -> np.ndarray:
        """The next n outputs as one batch.

        splitmix64 is counter-based (state after k steps is seed + k * phi),
        so the batch is computed elementwise on uint64 arrays and is
        bit-identical to n sequential `next_u64` calls.
        """
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self.state) + steps * np.uint64(0x9E3779B97F4A7C15)
        self.state = int(states[-1])
        z = (states ^ (states >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def uniform_array(self, n: int, lo: float, hi: float) -> np.ndarray:
        u = (self.next_u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (rejection-free modulo map)."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        return lo + int(self.next_u64() % span)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller, two fresh uniforms per draw (no spare caching)."""
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1]
        u2 = self.next_float()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return Matrix(np.matmul(a.array, b.array))


def sorted_sum(terms: np.ndarray, axis: int) -> np.ndarray:
    """Sum along `axis` in ascending value order.

    The result depends only on the multiset of summands along the axis, not
    their arrangement, so callers get bitwise-identical sums when the axis
    is permuted.
    """
    ordered = np.sort(terms, axis=axis)
    return np.sum(ordered, axis=axis)


def softmax_rows(m: Matrix) -> Matrix:
    """Row softmax with max-subtraction stabilization.

    The normalizer is a sorted sum, so permuting the entries of a row
    permutes the outputs bitwise.
    """
    shifted = m.array - np.max(m.array, axis=1, keepdims=True)
    exps = np.exp(shifted)
    denom = sorted_sum(exps, axis=1)
    return Matrix(exps / denom[:, None])


def sigmoid(m: Matrix) -> Matrix:
    """Elementwise 1 / (1 + exp(-x)), computed on the stable branch."""
    x = m.array
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Matrix(out)


def layer_norm(m: Matrix, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> Matrix:
    """Per-row normalization to mean 0 / variance 1, then affine gain + bias."""
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (m.cols,) or bias.shape != (m.cols,):
        raise ShapeError("gain/bias length must equal column count")
    mu = np.mean(m.array, axis=1, keepdims=True)
    centered = m.array - mu
    var = np.mean(centered * centered, axis=1, keepdims=True)
    return Matrix(centered / np.sqrt(var + eps) * gain + bias)


def init_linear(rng: Rng, out_dim: int, in_dim: int, scale: float) -> LinearLayer:
    """Weights uniform in [-scale, +scale], drawn row-major; bias zero."""
    if out_dim < 1 or in_dim < 1:
        raise ShapeError("layer dimensions must be >= 1")
    w = np.empty((out_dim, in_dim))
    for i in range(out_dim):
        for j in range(in_dim):
            w[i, j] = rng.uniform(-scale, scale)
    return LinearLayer(weight=Matrix(w), bias=np.zeros(out_dim))
