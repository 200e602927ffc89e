"""Forward and backward behavior of every tensor op.

Each differentiable op is checked against a hand evaluation or an
independent direct-summation oracle; graph mechanics (gradient routing,
finiteness guards, usage errors) are covered at the end.
"""

import numpy as np
import pytest

from twingan import engine as E
from twingan.engine import Tensor
from twingan.errors import NonFiniteError, ShapeError, UsageError
from twingan.rng import RngStream

from conftest import rand64, t64


def conv_loop_oracle(x: np.ndarray, k: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Direct nested-loop cross-correlation, the slow reference."""
    b, ci, h, w = x.shape
    co, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((b, co, oh, ow), dtype=x.dtype)
    for n in range(b):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = np.sum(patch * k[o])
    return out


class TestConv2d:
    def test_all_ones_sums_kernel_window(self):
        x = t64(np.ones((1, 1, 3, 3)))
        k = t64(np.ones((1, 1, 2, 2)))
        out = E.conv2d(x, k, stride=1, pad=0)
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out.data == 4.0)

    def test_identity_kernel(self, rng):
        x = rand64(rng, (2, 1, 5, 5))
        k = t64(np.ones((1, 1, 1, 1)))
        out = E.conv2d(x, k, stride=1, pad=0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_matches_loop_oracle(self, rng):
        x = rand64(rng, (1, 2, 5, 5))
        k = rand64(rng, (3, 2, 3, 3))
        out = E.conv2d(x, k, stride=2, pad=1)
        assert out.shape == (1, 3, 3, 3)
        ref = conv_loop_oracle(x.data, k.data, 2, 1)
        np.testing.assert_allclose(out.data, ref, rtol=0, atol=1e-12)

    def test_shape_postcondition_grid(self, rng):
        for stride in (1, 2, 3):
            for pad in (0, 1, 2):
                for kh in (1, 3, 4):
                    h = 7
                    if h + 2 * pad < kh:
                        continue
                    x = rand64(rng, (1, 2, h, h))
                    k = rand64(rng, (2, 2, kh, kh))
                    out = E.conv2d(x, k, stride=stride, pad=pad)
                    expect = (h + 2 * pad - kh) // stride + 1
                    assert out.shape == (1, 2, expect, expect)
                    ref = conv_loop_oracle(x.data, k.data, stride, pad)
                    np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_channel_mismatch_rejected(self, rng):
        x = rand64(rng, (1, 2, 4, 4))
        k = rand64(rng, (1, 3, 2, 2))
        with pytest.raises(ShapeError):
            E.conv2d(x, k)

    def test_kernel_larger_than_padded_input_rejected(self, rng):
        x = rand64(rng, (1, 1, 3, 3))
        k = rand64(rng, (1, 1, 5, 5))
        with pytest.raises(ShapeError):
            E.conv2d(x, k, stride=1, pad=0)


class TestConv2dTranspose:
    def test_stride2_doubles_spatial(self, rng):
        x = rand64(rng, (1, 1, 2, 2))
        k = rand64(rng, (1, 1, 2, 2))
        out = E.conv2d_transpose(x, k, stride=2, pad=0)
        assert out.shape == (1, 1, 4, 4)

    def test_identity_kernel(self, rng):
        x = rand64(rng, (2, 3, 4, 4))
        k = Tensor(np.ones((3, 3, 1, 1)) * np.eye(3)[:, :, None, None])
        out = E.conv2d_transpose(x, k, stride=1, pad=0)
        np.testing.assert_allclose(out.data, x.data, atol=1e-14)

    def test_output_size_formula(self, rng):
        for stride in (1, 2):
            for pad in (0, 1):
                for kh in (3, 4):
                    x = rand64(rng, (1, 2, 5, 5))
                    k = rand64(rng, (2, 3, kh, kh))
                    out = E.conv2d_transpose(x, k, stride=stride, pad=pad)
                    expect = (5 - 1) * stride - 2 * pad + kh
                    assert out.shape == (1, 3, expect, expect)

    def test_is_gradient_of_conv_sum(self, rng):
        # The transpose op must realize the conv input-gradient exactly:
        # grad_y sum(conv2d(y, k)) == conv2d_transpose(ones, k); the same
        # kernel tensor serves both layouts under the adjoint pairing.
        # Geometry chosen stride-exact so the conv discards nothing.
        k = rand64(rng, (3, 2, 3, 3))
        y = rand64(rng, (1, 2, 5, 5), requires_grad=True)
        out = E.conv2d(y, k, stride=2, pad=1)
        E.backward(E.sum_all(out))
        ones = t64(np.ones(out.shape))
        via_transpose = E.conv2d_transpose(ones, k, stride=2, pad=1)
        np.testing.assert_allclose(y.grad, via_transpose.data, atol=1e-10)

    def test_channel_mismatch_rejected(self, rng):
        x = rand64(rng, (1, 2, 4, 4))
        k = rand64(rng, (3, 1, 2, 2))
        with pytest.raises(ShapeError):
            E.conv2d_transpose(x, k)


class TestActivations:
    def test_leaky_relu_piecewise(self):
        x = t64([2.0, -2.0, 0.0])
        out = E.leaky_relu(x, 0.2)
        np.testing.assert_array_equal(out.data, [2.0, -0.4, 0.0])

    def test_relu_piecewise(self):
        x = t64([1.5, -3.0, 0.0])
        np.testing.assert_array_equal(E.relu(x).data, [1.5, 0.0, 0.0])

    def test_tanh_odd_and_bounded(self, rng):
        x = rand64(rng, (50,), -3.0, 3.0)
        out = E.tanh(x)
        assert abs(E.tanh(t64(0.0)).item()) == 0.0
        np.testing.assert_allclose(out.data, -E.tanh(E.neg(x)).data, atol=1e-15)
        assert np.all(np.abs(out.data) < 1.0)

    def test_gradients_away_from_kink(self, rng):
        # Inputs kept away from 0 so central differences see one branch.
        from twingan.gradcheck import check_gradients
        base = rng.uniform(0.5, 1.5, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
        for f in (E.relu, lambda t: E.leaky_relu(t, 0.2), E.tanh):
            x = t64(base, requires_grad=True)
            err = check_gradients(lambda t: E.sum_all(f(t)), [x])
            assert err < 1e-6


class TestConcatChannels:
    def test_channel_count(self, rng):
        a = rand64(rng, (1, 3, 4, 4))
        b = rand64(rng, (1, 3, 4, 4))
        assert E.concat_channels(a, b).shape == (1, 6, 4, 4)

    def test_zero_channel_neutral(self, rng):
        a = rand64(rng, (1, 3, 4, 4))
        z = t64(np.zeros((1, 0, 4, 4)))
        np.testing.assert_array_equal(E.concat_channels(a, z).data, a.data)

    def test_backward_splits_ones(self, rng):
        a = rand64(rng, (1, 2, 3, 3), requires_grad=True)
        b = rand64(rng, (1, 4, 3, 3), requires_grad=True)
        E.backward(E.sum_all(E.concat_channels(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones(a.shape))
        np.testing.assert_array_equal(b.grad, np.ones(b.shape))

    def test_spatial_mismatch_rejected(self, rng):
        a = rand64(rng, (1, 2, 3, 3))
        b = rand64(rng, (1, 2, 4, 4))
        with pytest.raises(ShapeError):
            E.concat_channels(a, b)


class TestL1Mean:
    def test_identical_inputs_zero(self, rng):
        a = rand64(rng, (2, 3, 4, 4))
        assert E.l1_mean(a, t64(a.data.copy())).item() == 0.0

    def test_constant_case(self):
        a = t64(np.ones((2, 5)))
        b = t64(np.zeros((2, 5)))
        assert E.l1_mean(a, b).item() == 1.0

    def test_matches_loop_oracle(self, rng):
        a = rand64(rng, (2, 3, 5, 5))
        b = rand64(rng, (2, 3, 5, 5))
        total = 0.0
        for x, y in zip(a.data.ravel(), b.data.ravel()):
            total += abs(x - y)
        ref = total / a.data.size
        assert abs(E.l1_mean(a, b).item() - ref) < 1e-12

    def test_tie_subgradient_is_zero(self):
        a = t64([1.0, 2.0], requires_grad=True)
        b = t64([1.0, 0.0])
        E.backward(E.l1_mean(a, b))
        np.testing.assert_array_equal(a.grad, [0.0, 0.5])

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            E.l1_mean(rand64(rng, (2, 2)), rand64(rng, (3, 2)))


class TestDropout:
    def test_rate_zero_identity(self, rng):
        x = rand64(rng, (4, 4))
        out = E.dropout(x, 0.0, RngStream(0, 0), enabled=True)
        np.testing.assert_array_equal(out.data, x.data)

    def test_rate_one_all_zero(self, rng):
        x = rand64(rng, (4, 4))
        out = E.dropout(x, 1.0, RngStream(0, 0), enabled=True)
        assert np.all(out.data == 0.0)

    def test_disabled_is_identity(self, rng):
        x = rand64(rng, (4, 4))
        out = E.dropout(x, 0.7, RngStream(0, 0), enabled=False)
        np.testing.assert_array_equal(out.data, x.data)

    def test_monte_carlo_expectation(self):
        # Survivor scaling 1/(1-rate) keeps the mean unbiased; the bound is
        # three standard errors of the masked-mean estimator.
        n = 10000
        gen = np.random.default_rng(7)
        x = t64(gen.uniform(0.5, 1.5, size=n))
        out = E.dropout(x, 0.5, RngStream(42, 0), enabled=True)
        se = np.sqrt(np.mean(x.data ** 2) / n)
        assert abs(np.mean(out.data) - np.mean(x.data)) < 3.0 * se

    def test_same_seed_same_mask(self, rng):
        x = rand64(rng, (8, 8))
        a = E.dropout(x, 0.5, RngStream(3, 9), enabled=True)
        b = E.dropout(x, 0.5, RngStream(3, 9), enabled=True)
        np.testing.assert_array_equal(a.data, b.data)

    def test_survivors_scaled(self, rng):
        x = t64(np.ones((32, 32)))
        out = E.dropout(x, 0.25, RngStream(5, 0), enabled=True)
        kept = out.data[out.data != 0.0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)

    def test_backward_routes_through_mask(self):
        x = t64(np.ones(64), requires_grad=True)
        out = E.dropout(x, 0.5, RngStream(11, 0), enabled=True)
        E.backward(E.sum_all(out))
        np.testing.assert_array_equal(x.grad, out.data)


class TestBackwardMechanics:
    def test_sum_gives_ones(self, rng):
        x = rand64(rng, (3, 4), requires_grad=True)
        E.backward(E.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_chain_matches_finite_differences(self, rng):
        from twingan.gradcheck import check_gradients
        x = rand64(rng, (1, 2, 5, 5), requires_grad=True)
        k = rand64(rng, (3, 2, 3, 3), requires_grad=True)
        tgt = rand64(rng, (1, 3, 3, 3))

        def f(xi, ki):
            return E.l1_mean(E.leaky_relu(E.conv2d(xi, ki, stride=2, pad=1), 0.2), tgt)

        assert check_gradients(f, [x, k]) < 1e-4

    def test_no_requires_grad_keeps_grad_absent(self, rng):
        x = rand64(rng, (3,), requires_grad=True)
        c = rand64(rng, (3,))
        E.backward(E.sum_all(E.add(x, c)))
        assert x.grad is not None
        assert c.grad is None

    def test_annihilated_leaf_gets_zero_grad(self, rng):
        x = rand64(rng, (2, 2), requires_grad=True)
        y = rand64(rng, (2, 2), requires_grad=True)
        E.backward(E.sum_all(E.add(x, E.scale(y, 0.0))))
        np.testing.assert_array_equal(y.grad, np.zeros((2, 2)))

    def test_nonscalar_backward_rejected(self, rng):
        with pytest.raises(UsageError):
            E.backward(rand64(rng, (3,), requires_grad=True))

    def test_shared_subexpression_accumulates(self, rng):
        x = rand64(rng, (4,), requires_grad=True)
        y = E.add(x, x)
        E.backward(E.sum_all(y))
        np.testing.assert_array_equal(x.grad, 2.0 * np.ones(4))

    def test_second_backward_overwrites(self, rng):
        x = rand64(rng, (4,), requires_grad=True)
        E.backward(E.sum_all(x))
        E.backward(E.mean_all(x))
        np.testing.assert_allclose(x.grad, 0.25 * np.ones(4))


class TestFiniteGuards:
    def test_nan_input_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([1.0, np.nan]))

    def test_inf_input_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.array([np.inf]))

    def test_all_finite_forward_outputs(self, rng):
        x = rand64(rng, (1, 2, 6, 6))
        k = rand64(rng, (2, 2, 3, 3))
        out = E.tanh(E.conv2d(x, k, stride=1, pad=1))
        assert np.all(np.isfinite(out.data))
