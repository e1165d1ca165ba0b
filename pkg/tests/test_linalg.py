import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoiprior import LinearLayer, Matrix, Rng, init_linear, layer_norm, matmul, sigmoid, softmax_rows
from hoiprior.errors import ShapeError
from hoiprior.linalg import sorted_sum


class TestMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Matrix([[1.0, float("nan")]])
        with pytest.raises(ValueError):
            Matrix([[float("inf")]])

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            Matrix([1.0, 2.0])

    def test_data_is_row_major(self):
        m = Matrix([[1.0, 2.0], [3.0, 4.0]])
        assert m.rows == 2 and m.cols == 2
        assert list(m.data) == [1.0, 2.0, 3.0, 4.0]

    def test_immutable(self):
        m = Matrix([[1.0]])
        with pytest.raises(ValueError):
            m.array[0, 0] = 2.0


class TestMatmul:
    def test_identity(self):
        x = Matrix([[3.0, 4.0], [5.0, 6.0]])
        eye = Matrix(np.eye(2))
        assert matmul(eye, x) == x

    def test_hand_case(self):
        out = matmul(Matrix([[1.0, 2.0]]), Matrix([[3.0], [4.0]]))
        assert out.tolist() == [[11.0]]

    def test_zero_matrix(self):
        z = Matrix.zeros(2, 3)
        x = Matrix(np.arange(12, dtype=float).reshape(3, 4))
        assert matmul(z, x) == Matrix.zeros(2, 4)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            matmul(Matrix.zeros(2, 3), Matrix.zeros(2, 3))

    def test_associativity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = Matrix(rng.standard_normal((3, 4)))
            b = Matrix(rng.standard_normal((4, 5)))
            c = Matrix(rng.standard_normal((5, 2)))
            left = matmul(matmul(a, b), c).array
            right = matmul(a, matmul(b, c)).array
            assert np.max(np.abs(left - right)) < 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        a = Matrix(rng.standard_normal((6, 6)))
        b = Matrix(rng.standard_normal((6, 6)))
        assert matmul(a, b) == matmul(a, b)


class TestSoftmaxRows:
    def test_uniform_logits(self):
        out = softmax_rows(Matrix([[0.0, 0.0, 0.0]]))
        assert out.tolist() == [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]

    def test_hand_case(self):
        out = softmax_rows(Matrix([[math.log(2.0), 0.0]]))
        np.testing.assert_allclose(out.array, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)

    def test_extreme_logits_no_overflow(self):
        out = softmax_rows(Matrix([[1000.0, 0.0]]))
        assert out.array[0, 0] > 1.0 - 1e-12
        assert out.array[0, 1] < 1e-12

    @given(
        st.lists(
            st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=1, max_size=6),
            min_size=1,
            max_size=5,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    @settings(max_examples=200, deadline=None)
    def test_rows_sum_to_one(self, rows):
        out = softmax_rows(Matrix(rows))
        sums = np.sum(out.array, axis=1)
        assert np.all(np.abs(sums - 1.0) <= 1e-9)
        assert np.all(out.array >= 0.0)

    def test_column_permutation_is_bitwise(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((4, 7)) * 100
        perm = rng.permutation(7)
        direct = softmax_rows(Matrix(m)).array[:, perm]
        permuted = softmax_rows(Matrix(m[:, perm])).array
        assert np.array_equal(direct, permuted)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(Matrix([[0.0]])).tolist() == [[0.5]]

    def test_large_negative_saturates_monotone(self):
        xs = np.array([[-700.0, -100.0, -10.0, 0.0, 10.0]])
        out = sigmoid(Matrix(xs)).array[0]
        assert out[0] < 1e-300 or out[0] > 0.0
        assert np.all(np.diff(out) > 0)
        assert np.all((out > 0.0) & (out < 1.0))

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-30, 30, size=(5, 5))
        total = sigmoid(Matrix(x)).array + sigmoid(Matrix(-x)).array
        np.testing.assert_allclose(total, 1.0, atol=1e-12)


class TestLayerNorm:
    def test_constant_row_zero(self):
        out = layer_norm(Matrix([[5.0, 5.0, 5.0]]), np.ones(3), np.zeros(3))
        np.testing.assert_allclose(out.array, 0.0, atol=1e-9)

    def test_hand_case(self):
        out = layer_norm(Matrix([[1.0, -1.0]]), np.ones(2), np.zeros(2), eps=1e-15)
        np.testing.assert_allclose(out.array, [[1.0, -1.0]], atol=1e-7)

    def test_row_mean_is_bias_mean(self):
        rng = np.random.default_rng(4)
        m = Matrix(rng.standard_normal((3, 8)))
        bias = rng.standard_normal(8)
        out = layer_norm(m, np.ones(8), bias)
        np.testing.assert_allclose(np.mean(out.array, axis=1), np.mean(bias), atol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(6)
        m = rng.standard_normal((4, 6))
        gain = rng.standard_normal(6)
        bias = rng.standard_normal(6)
        a = layer_norm(Matrix(m), gain, bias).array
        b = layer_norm(Matrix(m + 123.0), gain, bias).array
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            layer_norm(Matrix.zeros(2, 3), np.ones(4), np.zeros(4))


class TestRng:
    def test_matches_reference_splitmix64(self):
        # independent reimplementation of the documented recurrence
        mask = (1 << 64) - 1

        def reference(seed, n):
            state = seed & mask
            out = []
            for _ in range(n):
                state = (state + 0x9E3779B97F4A7C15) & mask
                z = state
                z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
                z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
                out.append(z ^ (z >> 31))
            return out

        rng = Rng(123456789)
        assert [rng.next_u64() for _ in range(8)] == reference(123456789, 8)

    def test_same_seed_same_stream(self):
        a = Rng(42)
        b = Rng(42)
        assert [a.next_float() for _ in range(100)] == [b.next_float() for _ in range(100)]

    def test_float_range(self):
        rng = Rng(7)
        vals = [rng.next_float() for _ in range(1000)]
        assert all(0.0 <= v < 1.0 for v in vals)

    def test_normal_deterministic_and_finite(self):
        rng = Rng(9)
        vals = [rng.normal(0.0, 1.0) for _ in range(100)]
        assert all(math.isfinite(v) for v in vals)
        assert Rng(9).normal(0.0, 1.0) == vals[0]


class TestInitLinear:
    def test_same_seed_bit_identical(self):
        a = init_linear(Rng(1), 4, 3, 0.5)
        b = init_linear(Rng(1), 4, 3, 0.5)
        assert a.weight == b.weight
        assert np.array_equal(a.bias, b.bias)

    def test_zero_scale(self):
        layer = init_linear(Rng(1), 3, 3, 0.0)
        assert layer.weight == Matrix.zeros(3, 3)

    def test_different_seeds_differ(self):
        a = init_linear(Rng(1), 5, 5, 1.0)
        b = init_linear(Rng(2), 5, 5, 1.0)
        assert a.weight != b.weight

    def test_bias_zero_and_bounds(self):
        layer = init_linear(Rng(3), 6, 7, 0.25)
        assert np.all(layer.bias == 0.0)
        assert np.all(np.abs(layer.weight.array) <= 0.25)


class TestLinearLayer:
    def test_apply_rows_matches_apply_vector(self):
        rng = np.random.default_rng(8)
        layer = LinearLayer(weight=Matrix(rng.standard_normal((3, 5))), bias=rng.standard_normal(3))
        x = Matrix(rng.standard_normal((4, 5)))
        rowwise = layer.apply_rows(x).array
        for i in range(4):
            assert np.array_equal(rowwise[i], layer.apply_vector(x.array[i]))

    def test_apply_rows_permutation_equivariant(self):
        rng = np.random.default_rng(9)
        layer = LinearLayer(weight=Matrix(rng.standard_normal((6, 6))), bias=rng.standard_normal(6))
        x = rng.standard_normal((50, 6))
        perm = rng.permutation(50)
        assert np.array_equal(
            layer.apply_rows(Matrix(x)).array[perm],
            layer.apply_rows(Matrix(x[perm])).array,
        )


class TestSortedSum:
    def test_permutation_invariant(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            x = rng.standard_normal(int(rng.integers(1, 40))) * 10 ** rng.integers(0, 6)
            perm = rng.permutation(len(x))
            assert sorted_sum(x, axis=0) == sorted_sum(x[perm], axis=0)
