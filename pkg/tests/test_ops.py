import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ktedge import ops
from ktedge.rng import RngState


class TestHeUniform:
    def test_fan_in_six_limit_is_one(self):
        w = ops.he_uniform_init((100,), 6, RngState(0))
        assert np.all(np.abs(w) <= 1.0)
        assert np.any(np.abs(w) > 0.9)  # fills the interval

    def test_fan_in_nine_limit(self):
        w = ops.he_uniform_init((10000,), 9, RngState(1))
        assert np.all(np.abs(w) <= math.sqrt(6 / 9))
        assert np.max(np.abs(w)) > 0.8  # sqrt(6/9) ~ 0.8165

    def test_deterministic(self):
        a = ops.he_uniform_init((3, 3, 2, 4), 18, RngState(42))
        b = ops.he_uniform_init((3, 3, 2, 4), 18, RngState(42))
        assert np.array_equal(a, b)

    def test_fan_in_zero_rejected(self):
        with pytest.raises(ValueError):
            ops.he_uniform_init((4,), 0, RngState(0))

    def test_mean_near_zero(self):
        n = 10_000
        w = ops.he_uniform_init((n,), 12, RngState(7), dtype=np.float64)
        limit = math.sqrt(6 / 12)
        sigma_mean = limit / math.sqrt(3 * n)
        assert abs(w.mean()) < 3 * sigma_mean


class TestMish:
    def test_zero(self):
        assert ops.mish(np.array([0.0]))[0] == 0.0

    def test_one(self):
        # x * tanh(ln(1 + e^x)) at x=1
        assert ops.mish(np.array([1.0]))[0] == pytest.approx(0.8650983882, abs=1e-6)

    def test_saturates_negative(self):
        assert abs(ops.mish(np.array([-20.0]))[0]) < 1e-7

    def test_large_positive_is_identity_like(self):
        x = np.array([25.0, 100.0, 500.0])
        y = ops.mish(x)
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y, x, rtol=1e-6)


class TestSoftmax:
    def test_two_zeros(self):
        np.testing.assert_allclose(ops.softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_known_values(self):
        p = ops.softmax(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(p, [0.09003057, 0.24472847, 0.66524096], atol=1e-5)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
           st.floats(-100, 100))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, vals, c):
        z = np.array(vals)
        p = ops.softmax(z)
        assert abs(p.sum() - 1.0) < 1e-6
        assert np.all(p > 0) and np.all(p < 1.0 + 1e-12)
        np.testing.assert_allclose(p, ops.softmax(z + c), atol=1e-6)


class TestSccLoss:
    def test_uniform_logits(self):
        z = np.zeros(7)
        assert ops.scc_loss(z, 3) == pytest.approx(math.log(7), abs=1e-9)

    def test_confident_correct_goes_to_zero(self):
        z = np.array([50.0, 0.0, 0.0])
        assert ops.scc_loss(z, 0) < 1e-12

    def test_shift_invariance(self):
        rng = RngState(3)
        z = np.array(rng.normal(9))
        assert ops.scc_loss(z, 4) == pytest.approx(ops.scc_loss(z + 13.7, 4), abs=1e-6)

    def test_out_of_range_index(self):
        with pytest.raises(ValueError):
            ops.scc_loss(np.zeros(3), 3)
        with pytest.raises(ValueError):
            ops.scc_loss_backward(np.zeros(3), -1)

    def test_gradient_formula(self):
        z = np.array([0.5, -1.0, 2.0])
        g = ops.scc_loss_backward(z, 1)
        expected = ops.softmax(z)
        expected[1] -= 1
        np.testing.assert_allclose(g, expected)


class TestConv2d:
    def test_1x1_is_affine(self):
        x = np.array([[[2.0]]])
        k = np.full((1, 1, 1, 1), 3.0)
        b = np.array([0.5])
        assert ops.conv2d(x, k, b)[0, 0, 0] == pytest.approx(6.5)

    def test_output_shape_40x40(self):
        x = np.zeros((40, 40, 3), dtype=np.float32)
        k = np.zeros((3, 3, 3, 16), dtype=np.float32)
        y = ops.conv2d(x, k, np.zeros(16, dtype=np.float32), stride=2)
        assert y.shape == (19, 19, 16)

    def test_same_padding_preserves_extent(self):
        x = np.ones((9, 9, 4), dtype=np.float32)
        k = np.ones((3, 3, 4, 2), dtype=np.float32)
        y = ops.conv2d(x, k, np.zeros(2, dtype=np.float32), padding="same")
        assert y.shape == (9, 9, 2)
        # interior positions see the full 3x3x4 window of ones
        assert y[4, 4, 0] == pytest.approx(36.0)
        assert y[0, 0, 0] == pytest.approx(16.0)  # corner: 2x2x4 after zero pad

    def test_kernel_too_large(self):
        with pytest.raises(ValueError):
            ops.conv2d(np.zeros((2, 2, 1)), np.zeros((3, 3, 1, 1)), np.zeros(1))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            ops.conv2d(np.zeros((4, 4, 2)), np.zeros((3, 3, 1, 1)), np.zeros(1))

    def test_matches_naive_loops(self):
        rng = RngState(11)
        x = np.array(rng.normal(6 * 7 * 2)).reshape(6, 7, 2)
        k = np.array(rng.normal(3 * 3 * 2 * 4)).reshape(3, 3, 2, 4)
        b = np.array(rng.normal(4))
        y = ops.conv2d(x, k, b, stride=2)
        oh, ow = (6 - 3) // 2 + 1, (7 - 3) // 2 + 1
        naive = np.zeros((oh, ow, 4))
        for i in range(oh):
            for j in range(ow):
                for f in range(4):
                    patch = x[i * 2:i * 2 + 3, j * 2:j * 2 + 3, :]
                    naive[i, j, f] = np.sum(patch * k[:, :, :, f]) + b[f]
        np.testing.assert_allclose(y, naive, atol=1e-12)


class TestMaxPool:
    def test_constant_input(self):
        y = ops.maxpool2d(np.full((5, 5, 2), 3.0), 3, 2)
        assert y.shape == (2, 2, 2)
        assert np.all(y == 3.0)

    def test_19_to_9(self):
        assert ops.maxpool2d(np.zeros((19, 19, 1)), 3, 2).shape == (9, 9, 1)

    def test_gradient_routes_to_max(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
        y = ops.maxpool2d(x, 2, 1)
        assert y[0, 0, 0] == 4.0
        dx = ops.maxpool2d_backward(np.array([[[5.0]]]), x, 2, 1)
        expected = np.zeros((2, 2, 1))
        expected[1, 1, 0] = 5.0
        np.testing.assert_array_equal(dx, expected)

    def test_tie_goes_to_first_row_major(self):
        x = np.full((2, 2, 1), 1.0)
        dx = ops.maxpool2d_backward(np.array([[[1.0]]]), x, 2, 1)
        expected = np.zeros((2, 2, 1))
        expected[0, 0, 0] = 1.0
        np.testing.assert_array_equal(dx, expected)

    def test_pool_too_large(self):
        with pytest.raises(ValueError):
            ops.maxpool2d(np.zeros((2, 2, 1)), 3, 2)


class TestDropout:
    def test_infer_is_identity(self):
        x = np.arange(12.0).reshape(3, 4)
        assert ops.dropout(x, 0.9, "infer") is x

    def test_rate_zero_identity(self):
        x = np.arange(6.0)
        np.testing.assert_array_equal(ops.dropout(x, 0.0, "train", RngState(0)), x)

    def test_survivors_scaled(self):
        x = np.ones(1000, dtype=np.float32)
        y = ops.dropout(x, 0.5, "train", RngState(5))
        assert set(np.unique(y)).issubset({0.0, 2.0})

    def test_expected_value_preserved(self):
        rng = RngState(21)
        x = np.ones(100_000, dtype=np.float64)
        y = ops.dropout(x, 0.5, "train", rng)
        assert abs(y.mean() - 1.0) < 0.02

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            ops.dropout(np.ones(3), 1.0, "train", RngState(0))

    def test_mask_reproducible(self):
        a = ops.dropout(np.ones(64), 0.3, "train", RngState(8))
        b = ops.dropout(np.ones(64), 0.3, "train", RngState(8))
        assert np.array_equal(a, b)


class TestGlobalAvgPool:
    def test_1x1_identity(self):
        x = np.arange(5.0).reshape(1, 1, 5)
        np.testing.assert_array_equal(ops.global_avg_pool(x), np.arange(5.0))

    def test_all_ones(self):
        np.testing.assert_allclose(ops.global_avg_pool(np.ones((4, 4, 7))), np.ones(7))

    def test_matches_direct_sum(self):
        x = np.array(RngState(2).normal(3 * 3 * 2)).reshape(3, 3, 2)
        want = np.array([x[:, :, c].sum() / 9 for c in range(2)])
        np.testing.assert_allclose(ops.global_avg_pool(x), want, atol=1e-12)
