import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasthand.errors import ContractError
from fasthand.tensor import (
    ConvWeights,
    add,
    conv2d,
    depthwise_conv2d,
    depthwise_separable_conv,
    pointwise_conv,
    relu,
    resize_bilinear,
    transposed_conv2d,
)
from oracles import bilinear_naive, conv2d_naive, depthwise_naive, pointwise_naive, transposed_naive


def _rand(rng, *shape):
    return rng.uniform(-1, 1, size=shape).astype(np.float32)


class TestConv2d:
    def test_all_ones_same(self):
        x = np.ones((3, 3, 1), np.float32)
        w = ConvWeights.dense(np.ones((3, 3, 1, 1)))
        y = conv2d(x, w, stride=1, padding="same")
        assert y.shape == (3, 3, 1)
        assert y[1, 1, 0] == 9
        assert y[0, 0, 0] == 4
        np.testing.assert_array_equal(y, conv2d_naive(x, w.values, w.bias, 1, "same"))

    def test_zero_kernel_gives_bias(self, rng):
        x = _rand(rng, 7, 5, 3)
        w = ConvWeights.dense(np.zeros((3, 3, 3, 2)), [1.5, -2.0])
        y = conv2d(x, w)
        assert np.all(y[..., 0] == 1.5) and np.all(y[..., 1] == -2.0)

    def test_identity_stride2_subsamples(self):
        x = np.arange(16, dtype=np.float32).reshape(4, 4, 1)
        w = ConvWeights.dense(np.ones((1, 1, 1, 1)))
        y = conv2d(x, w, stride=2, padding="same")
        np.testing.assert_array_equal(y[..., 0], [[0, 2], [8, 10]])

    @pytest.mark.parametrize("size,k,stride,padding,expected", [
        (128, 3, 2, "same", 64), (7, 3, 2, "same", 4), (7, 3, 1, "valid", 5), (8, 3, 2, "valid", 3),
    ])
    def test_output_size(self, size, k, stride, padding, expected):
        x = np.zeros((size, size, 1), np.float32)
        w = ConvWeights.dense(np.zeros((k, k, 1, 1)))
        assert conv2d(x, w, stride, padding).shape == (expected, expected, 1)

    def test_channel_mismatch(self):
        with pytest.raises(ContractError):
            conv2d(np.zeros((4, 4, 2)), ConvWeights.dense(np.zeros((3, 3, 3, 1))))

    def test_zero_size_input(self):
        with pytest.raises(ContractError):
            conv2d(np.zeros((0, 4, 1)), ConvWeights.dense(np.zeros((3, 3, 1, 1))))

    def test_bad_stride(self):
        with pytest.raises(ContractError):
            conv2d(np.zeros((4, 4, 1)), ConvWeights.dense(np.zeros((3, 3, 1, 1))), stride=3)

    def test_same_padding_extra_pixel_bottom_right(self):
        # 4x4 input, 2x2 kernel, stride 1: one pad pixel, placed after
        x = np.ones((4, 4, 1), np.float32)
        y = conv2d(x, ConvWeights.dense(np.ones((2, 2, 1, 1))))
        assert y[0, 0, 0] == 4 and y[3, 3, 0] == 1


class TestDepthwiseSeparable:
    def test_constant_two_channel(self):
        x = np.stack([np.ones((5, 5)), 2 * np.ones((5, 5))], axis=-1).astype(np.float32)
        dw = ConvWeights.depthwise_kernel(np.ones((3, 3, 2)))
        pw = ConvWeights.dense(np.ones((1, 1, 2, 1)))
        y = depthwise_separable_conv(x, dw, pw, stride=1)
        assert y[2, 2, 0] == 27

    def test_identity_composition(self, rng):
        x = _rand(rng, 6, 6, 3)
        dw = ConvWeights.depthwise_kernel(np.ones((1, 1, 3)))
        pw = ConvWeights.dense(np.eye(3).reshape(1, 1, 3, 3))
        np.testing.assert_array_equal(depthwise_separable_conv(x, dw, pw), x)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_expanded_dense_kernel(self, rng, stride):
        x = _rand(rng, 8, 8, 4)
        dwv, pwv = _rand(rng, 3, 3, 4), _rand(rng, 1, 1, 4, 5)
        dwb, pwb = _rand(rng, 4), _rand(rng, 5)
        # dense kernel K[ky,kx,ci,co] = dw[ky,kx,ci] * pw[ci,co]; bias folds through pw
        dense = dwv[:, :, :, None] * pwv[0, 0][None, None]
        bias = pwb + dwb @ pwv[0, 0]
        expect = conv2d_naive(x, dense, bias, stride, "same")
        got = depthwise_separable_conv(x, ConvWeights(dwv, dwb, True), ConvWeights(pwv, pwb), stride)
        np.testing.assert_allclose(got, expect, atol=1e-5)

    def test_equals_pointwise_of_depthwise(self, rng):
        x = _rand(rng, 9, 7, 3)
        dw = ConvWeights(_rand(rng, 3, 3, 3), _rand(rng, 3), True)
        pw = ConvWeights(_rand(rng, 1, 1, 3, 6), _rand(rng, 6))
        np.testing.assert_array_equal(
            depthwise_separable_conv(x, dw, pw, 2), pointwise_conv(depthwise_conv2d(x, dw, 2), pw)
        )

    def test_rejects_non_1x1_pointwise(self):
        dw = ConvWeights.depthwise_kernel(np.ones((3, 3, 2)))
        with pytest.raises(ContractError):
            depthwise_separable_conv(np.zeros((4, 4, 2)), dw, ConvWeights.dense(np.ones((3, 3, 2, 1))))


class TestPointwise:
    def test_identity_matrix(self, rng):
        x = _rand(rng, 4, 4, 2)
        np.testing.assert_array_equal(pointwise_conv(x, ConvWeights.dense(np.eye(2).reshape(1, 1, 2, 2))), x)

    def test_dot_product(self):
        x = np.zeros((3, 3, 2), np.float32)
        x[..., 0], x[..., 1] = 1, 2
        y = pointwise_conv(x, ConvWeights.dense(np.array([3.0, 4.0]).reshape(1, 1, 2, 1)))
        assert np.all(y == 11)

    def test_zero_weights_bias(self, rng):
        y = pointwise_conv(_rand(rng, 3, 4, 5), ConvWeights.dense(np.zeros((1, 1, 5, 2)), [5, 5]))
        assert np.all(y == 5)


class TestTransposedConv:
    def test_single_site_scatter(self):
        k = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1, 1)
        y = transposed_conv2d(np.full((1, 1, 1), 2.5, np.float32), ConvWeights.dense(k), stride=2)
        np.testing.assert_array_equal(y[..., 0], 2.5 * k[..., 0, 0])

    def test_doubles_8x8(self, rng):
        y = transposed_conv2d(_rand(rng, 8, 8, 6), ConvWeights.dense(_rand(rng, 4, 4, 6, 3)))
        assert y.shape == (16, 16, 3)

    def test_three_stages_reach_64(self, rng):
        x = _rand(rng, 8, 8, 2)
        for _ in range(3):
            x = transposed_conv2d(x, ConvWeights.dense(_rand(rng, 4, 4, 2, 2)))
        assert x.shape == (64, 64, 2)

    def test_random_vs_scatter_oracle(self, rng):
        x = _rand(rng, 4, 4, 3)
        w, b = _rand(rng, 4, 4, 3, 2), _rand(rng, 2)
        np.testing.assert_allclose(transposed_conv2d(x, ConvWeights(w, b)), transposed_naive(x, w, b, 2), atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ContractError):
            transposed_conv2d(np.zeros((2, 2, 3)), ConvWeights.dense(np.zeros((4, 4, 2, 1))))

    def test_odd_geometry_rejected(self):
        with pytest.raises(ContractError):
            transposed_conv2d(np.zeros((2, 2, 1)), ConvWeights.dense(np.zeros((3, 3, 1, 1))))


class TestResize:
    @given(st.floats(-10, 10, allow_nan=False, width=32), st.integers(1, 12), st.integers(1, 12))
    @settings(max_examples=40, deadline=None)
    def test_constant_stays_constant(self, value, oh, ow):
        x = np.full((3, 5, 2), value, np.float32)
        y = resize_bilinear(x, oh, ow)
        assert y.shape == (oh, ow, 2)
        np.testing.assert_allclose(y, value, rtol=1e-6, atol=1e-6)

    def test_middle_column_half(self):
        x = np.array([[0, 1], [0, 1]], np.float32)[..., None]
        y = resize_bilinear(x, 2, 3)
        np.testing.assert_allclose(y[:, 1, 0], [0.5, 0.5])
        np.testing.assert_allclose(y[..., 0], bilinear_naive(x, 2, 3)[..., 0])

    def test_identity_bitwise(self, rng):
        x = _rand(rng, 5, 6, 3)
        np.testing.assert_array_equal(resize_bilinear(x, 5, 6), x)

    def test_upsample_vs_oracle(self, rng):
        x = _rand(rng, 4, 3, 2)
        np.testing.assert_allclose(resize_bilinear(x, 8, 6), bilinear_naive(x, 8, 6), atol=1e-6)

    def test_bad_size(self):
        with pytest.raises(ContractError):
            resize_bilinear(np.zeros((2, 2, 1)), 0, 3)


class TestElementwise:
    def test_relu(self):
        np.testing.assert_array_equal(relu(np.array([-1, 0, 2], np.float32).reshape(1, 3, 1)).ravel(), [0, 0, 2])

    def test_add_identity_and_commutativity(self, rng):
        a, b = _rand(rng, 3, 3, 2), _rand(rng, 3, 3, 2)
        np.testing.assert_array_equal(add(a, np.zeros_like(a)), a)
        np.testing.assert_array_equal(add(a, b), add(b, a))

    def test_add_shape_mismatch(self):
        with pytest.raises(ContractError):
            add(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))


def test_kernels_are_deterministic(rng):
    x = _rand(rng, 9, 9, 4)
    w = ConvWeights(_rand(rng, 3, 3, 4, 4), _rand(rng, 4))
    assert conv2d(x, w, 2).tobytes() == conv2d(x, w, 2).tobytes()
    t = ConvWeights(_rand(rng, 4, 4, 4, 2), _rand(rng, 2))
    assert transposed_conv2d(x, t).tobytes() == transposed_conv2d(x, t).tobytes()


def test_pointwise_oracle(rng):
    x = _rand(rng, 3, 4, 3)
    w, b = _rand(rng, 1, 1, 3, 2), _rand(rng, 2)
    np.testing.assert_allclose(pointwise_conv(x, ConvWeights(w, b)), pointwise_naive(x, w, b), atol=1e-6)


def test_depthwise_oracle(rng):
    x = _rand(rng, 7, 6, 3)
    w, b = _rand(rng, 3, 3, 3), _rand(rng, 3)
    np.testing.assert_allclose(depthwise_conv2d(x, ConvWeights(w, b, True), 2), depthwise_naive(x, w, b, 2), atol=1e-6)
