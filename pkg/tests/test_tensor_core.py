import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import avg_pool_sum, bilinear_ref, conv2d_loops, conv2d_ref, matmul_loops, softmax_mp
from spikecam.tensor_core import (
    ConfigurationError,
    ShapeError,
    bilinear_sample,
    conv2d,
    global_avg_pool,
    leaky_relu,
    matmul,
    softmax,
    window_merge,
    window_partition,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestConv2d:
    def test_identity_kernel(self):
        out = conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 1, 1)))
        assert out.shape == (1, 3, 3)
        assert np.array_equal(out, np.ones((1, 3, 3)))

    def test_full_window_sum(self):
        out = conv2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), np.ones((1, 1, 2, 2)))
        assert out.shape == (1, 1, 1) and out[0, 0, 0] == 10.0

    def test_random_matches_nested_loops(self, rng):
        x = rng.standard_normal((3, 16, 16))
        k = rng.standard_normal((4, 3, 3, 3))
        np.testing.assert_allclose(conv2d(x, k), conv2d_loops(x, k), atol=1e-9, rtol=0)

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (2, 0), (1, 2)])
    def test_stride_padding_against_loops(self, rng, stride, pad):
        x = rng.standard_normal((2, 9, 9))
        k = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        np.testing.assert_allclose(conv2d(x, k, stride, pad, b), conv2d_loops(x, k, stride, pad, b), atol=1e-9)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError, match="input channels"):
            conv2d(rng.random((2, 5, 5)), rng.random((1, 3, 3, 3)))

    def test_non_integer_output(self, rng):
        with pytest.raises(ConfigurationError):
            conv2d(rng.random((1, 6, 6)), rng.random((1, 1, 3, 3)), stride=2)

    def test_deterministic(self, rng):
        x, k = rng.random((4, 20, 20)), rng.random((5, 4, 3, 3))
        assert conv2d(x, k, 1, 1).tobytes() == conv2d(x, k, 1, 1).tobytes()


class TestLeakyRelu:
    def test_definition(self):
        np.testing.assert_array_equal(leaky_relu([1.0, -1.0], 0.1), [1.0, -0.1])

    def test_identity_on_nonnegative(self, rng):
        x = rng.random((3, 4))
        assert np.array_equal(leaky_relu(x), x)

    def test_scalar_oracle(self, rng):
        x = rng.standard_normal(200)
        expect = [v if v >= 0 else 0.2 * v for v in x]
        assert np.array_equal(leaky_relu(x, 0.2), expect)

    @pytest.mark.parametrize("slope", [0.0, 1.0, -0.1])
    def test_slope_range(self, slope):
        with pytest.raises(ConfigurationError):
            leaky_relu([1.0], slope)


class TestSoftmax:
    def test_uniform(self):
        assert np.array_equal(softmax([0.0, 0, 0, 0]), [0.25] * 4)

    def test_large_values_stable(self):
        out = softmax([1000.0, 0.0])
        assert out[0] == 1.0 and out[1] == 0.0
        assert out.sum() == 1.0

    def test_matches_extended_precision(self, rng):
        x = rng.standard_normal((8, 8)) * 5
        out = softmax(x, axis=1)
        for i in range(8):
            np.testing.assert_allclose(out[i], softmax_mp(x[i]), atol=1e-12, rtol=0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(1, 16), elements=finite), finite)
    def test_sums_to_one_and_shift_invariant(self, x, c):
        out = softmax(x)
        assert abs(out.sum() - 1.0) <= 1e-9
        assert (out > 0).any() and (out <= 1).all()
        np.testing.assert_allclose(softmax(x + c), out, atol=1e-12, rtol=0)

    def test_bad_axis(self):
        with pytest.raises(ShapeError):
            softmax(np.zeros((2, 2)), axis=2)


class TestBilinear:
    def test_identity_grid_bit_exact(self, rng):
        x = rng.standard_normal((3, 7, 5))
        yy, xx = np.meshgrid(np.arange(7.0), np.arange(5.0), indexing="ij")
        assert np.array_equal(bilinear_sample(x, np.stack([yy, xx])), x)

    def test_center_average(self):
        img = np.array([[[0.0, 1.0], [2.0, 3.0]]])
        out = bilinear_sample(img, np.full((2, 1, 1), 0.5))
        assert out[0, 0, 0] == 1.5

    def test_random_against_four_corner_oracle(self, rng):
        img = rng.standard_normal((2, 6, 7))
        coords = np.stack([rng.uniform(-2, 8, (5, 5)), rng.uniform(-2, 9, (5, 5))])
        np.testing.assert_allclose(bilinear_sample(img, coords), bilinear_ref(img, coords), atol=1e-12, rtol=0)

    def test_far_outside_reads_zero(self, rng):
        img = rng.random((1, 4, 4)) + 1
        out = bilinear_sample(img, np.array([[[-5.0]], [[10.0]]]))
        assert out[0, 0, 0] == 0.0


class TestMatmul:
    def test_identity(self, rng):
        b = rng.random((3, 2))
        assert np.array_equal(matmul(np.eye(3), b), b)

    def test_scalar(self):
        assert matmul([[2.0]], [[3.0]])[0, 0] == 6.0

    def test_triple_loop_oracle(self, rng):
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 6))
        np.testing.assert_allclose(matmul(a, b), matmul_loops(a, b), atol=1e-9, rtol=0)

    def test_batched(self, rng):
        a, b = rng.standard_normal((3, 4, 5)), rng.standard_normal((3, 5, 2))
        out = matmul(a, b)
        for i in range(3):
            np.testing.assert_allclose(out[i], matmul_loops(a[i], b[i]), atol=1e-9)

    def test_associative(self, rng):
        for _ in range(20):
            m, n, p, q = rng.integers(1, 7, 4)
            a, b, c = rng.standard_normal((m, n)), rng.standard_normal((n, p)), rng.standard_normal((p, q))
            np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-6)

    def test_mismatch(self):
        with pytest.raises(ShapeError, match="inner"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(ShapeError, match="batch"):
            matmul(np.ones((2, 2, 3)), np.ones((3, 3, 2)))


class TestGlobalAvgPool:
    def test_constant(self):
        assert global_avg_pool(np.full((1, 3, 3), 7.0))[0] == 7.0

    def test_mean(self):
        assert global_avg_pool(np.array([[[1.0, 3.0], [5.0, 7.0]]]))[0] == 4.0

    def test_summation_oracle(self, rng):
        x = rng.standard_normal((5, 9, 11))
        np.testing.assert_allclose(global_avg_pool(x), avg_pool_sum(x), atol=1e-12, rtol=0)


def test_window_partition_round_trip(rng):
    x = rng.standard_normal((3, 16, 24))
    win = window_partition(x, 8)
    assert win.shape == (6, 64, 3)
    # window 1 is the second window of the first window-row
    np.testing.assert_array_equal(win[1, :, 0], x[0, :8, 8:16].ravel())
    assert np.array_equal(window_merge(win, 8, 16, 24), x)


def test_conv_scipy_oracle_agrees_with_loops(rng):
    # the fast reference used elsewhere must itself match the nested loops
    x, k, b = rng.standard_normal((2, 7, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    np.testing.assert_allclose(conv2d_ref(x, k, 1, b), conv2d_loops(x, k, 1, 1, b), atol=1e-12)
