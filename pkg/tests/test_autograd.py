import numpy as np
import pytest

from radiance import autograd as ag
from radiance.autograd import (AutogradError, NumericalError, ShapeError, Tensor,
                               backward, gradcheck, precision)


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.normal(0, 1, (2, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        out = ag.conv2d(x, w, None, 1, 0)
        assert np.array_equal(out.data, x.data)

    def test_box_kernel_on_constant(self):
        x = Tensor(np.ones((1, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        out = ag.conv2d(x, w, None, 1, 0)
        assert out.data.shape == (1, 1, 3, 3)
        assert np.allclose(out.data, 9.0)

    def test_stride_and_padding_shapes(self, rng):
        x = Tensor(rng.normal(0, 1, (1, 3, 8, 8)))
        w = Tensor(rng.normal(0, 1, (4, 3, 4, 4)))
        out = ag.conv2d(x, w, None, stride=2, padding=1)
        assert out.data.shape == (1, 4, 4, 4)

    def test_gradients_match_finite_differences(self):
        with precision("float64"):
            r = np.random.default_rng(0)
            x = Tensor(r.normal(0, 1, (2, 3, 8, 8)), requires_grad=True)
            w = Tensor(r.normal(0, 0.5, (4, 3, 3, 3)), requires_grad=True)
            b = Tensor(r.normal(0, 0.5, 4), requires_grad=True)
            proj = r.normal(0, 1, (2, 4, 6, 6))
            err = gradcheck(lambda: ag.tsum(ag.mul(ag.conv2d(x, w, b, 1, 0), proj)), [x, w, b])
        assert err <= 1e-4

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ag.conv2d(Tensor(rng.normal(0, 1, (1, 2, 4, 4))),
                      Tensor(rng.normal(0, 1, (1, 3, 3, 3))), None, 1, 0)

    def test_kernel_too_large(self, rng):
        with pytest.raises(ShapeError):
            ag.conv2d(Tensor(rng.normal(0, 1, (1, 1, 3, 3))),
                      Tensor(rng.normal(0, 1, (1, 1, 5, 5))), None, 1, 0)


class TestInstanceNorm:
    def test_constant_channel_zeroes(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.7))
        out = ag.instance_norm(x)
        assert np.allclose(out.data, 0.0)

    def test_standardized_input_nearly_unchanged(self, rng):
        raw = rng.normal(0, 1, (1, 1, 16, 16))
        raw = (raw - raw.mean()) / raw.std()
        out = ag.instance_norm(Tensor(raw), eps=1e-12)
        assert np.allclose(out.data, raw, atol=1e-4)

    def test_output_moments(self, rng):
        x = Tensor(rng.normal(3, 5, (2, 3, 8, 8)))
        out = ag.instance_norm(x)
        assert np.allclose(out.data.mean(axis=(2, 3)), 0.0, atol=1e-6)
        assert np.allclose(out.data.var(axis=(2, 3)), 1.0, atol=1e-3)

    def test_gradcheck(self):
        with precision("float64"):
            r = np.random.default_rng(1)
            x = Tensor(r.normal(0, 1, (2, 2, 4, 4)), requires_grad=True)
            proj = r.normal(0, 1, (2, 2, 4, 4))
            err = gradcheck(lambda: ag.tsum(ag.mul(ag.instance_norm(x), proj)), [x])
        assert err <= 1e-4


class TestSpadeNorm:
    def _params(self, r, channels, cond_ch, hidden, gamma_w_scale=0.3):
        return {
            "shared_w": Tensor(r.normal(0, 0.3, (hidden, cond_ch, 3, 3)), requires_grad=True),
            "shared_b": Tensor(r.normal(0, 0.3, hidden), requires_grad=True),
            "gamma_w": Tensor(r.normal(0, gamma_w_scale, (channels, hidden, 3, 3)), requires_grad=True),
            "gamma_b": Tensor(np.zeros(channels), requires_grad=True),
            "beta_w": Tensor(r.normal(0, 0.3, (channels, hidden, 3, 3)), requires_grad=True),
            "beta_b": Tensor(np.zeros(channels), requires_grad=True),
        }

    def test_identity_modulation(self, rng):
        # gamma forced to 1, beta to 0 -> plain parameter-free normalization
        p = self._params(np.random.default_rng(2), 3, 4, 5, gamma_w_scale=0.0)
        p["gamma_w"] = Tensor(np.zeros((3, 5, 3, 3)))
        p["gamma_b"] = Tensor(np.ones(3))
        p["beta_w"] = Tensor(np.zeros((3, 5, 3, 3)))
        x = Tensor(rng.normal(0, 1, (2, 3, 6, 6)))
        cond = Tensor(rng.uniform(0, 1, (2, 4, 6, 6)))
        out = ag.spade_norm(x, cond, p)
        assert np.allclose(out.data, ag.instance_norm(x).data, atol=1e-6)

    def test_constant_beta_with_zero_gamma(self, rng):
        p = self._params(np.random.default_rng(3), 2, 4, 5)
        for k in ("gamma_w", "gamma_b", "beta_w"):
            p[k] = Tensor(np.zeros_like(p[k].data))
        p["beta_b"] = Tensor(np.full(2, 2.5))
        x = Tensor(rng.normal(0, 1, (1, 2, 5, 5)))
        cond = Tensor(rng.uniform(0, 1, (1, 4, 5, 5)))
        out = ag.spade_norm(x, cond, p)
        assert np.allclose(out.data, 2.5, atol=1e-6)

    def test_gradients_all_inputs(self):
        with precision("float64"):
            r = np.random.default_rng(4)
            p = self._params(r, 2, 3, 4)
            x = Tensor(r.normal(0, 1, (1, 2, 4, 4)), requires_grad=True)
            cond = Tensor(r.normal(0, 1, (1, 3, 4, 4)), requires_grad=True)
            proj = r.normal(0, 1, (1, 2, 4, 4))
            err = gradcheck(lambda: ag.tsum(ag.mul(ag.spade_norm(x, cond, p), proj)),
                            [x, cond] + list(p.values()))
        assert err <= 1e-4

    def test_spatial_mismatch(self, rng):
        p = self._params(np.random.default_rng(5), 2, 3, 4)
        with pytest.raises(ShapeError):
            ag.spade_norm(Tensor(rng.normal(0, 1, (1, 2, 4, 4))),
                          Tensor(rng.normal(0, 1, (1, 3, 8, 8))), p)


class TestResampling:
    def test_upsample_replicates(self):
        x = Tensor(np.array([[[[7.0]]]]))
        out = ag.upsample_nearest_x2(x)
        assert np.array_equal(out.data, np.full((1, 1, 2, 2), 7.0))

    def test_mean_pool_inverts_upsample(self, rng):
        x = rng.normal(0, 1, (2, 3, 4, 4))
        up = ag.upsample_nearest_x2(Tensor(x)).data
        pooled = up.reshape(2, 3, 4, 2, 4, 2).mean(axis=(3, 5))
        assert np.allclose(pooled, x, atol=1e-7)

    def test_downsample_picks_topleft(self, rng):
        x = rng.normal(0, 1, (1, 1, 4, 4))
        out = ag.downsample_nearest_x2(Tensor(x))
        assert np.array_equal(out.data, x[:, :, ::2, ::2].astype(out.data.dtype))

    def test_gradchecks(self):
        with precision("float64"):
            r = np.random.default_rng(6)
            x = Tensor(r.normal(0, 1, (1, 2, 4, 4)), requires_grad=True)
            proj_u = r.normal(0, 1, (1, 2, 8, 8))
            proj_d = r.normal(0, 1, (1, 2, 2, 2))
            assert gradcheck(lambda: ag.tsum(ag.mul(ag.upsample_nearest_x2(x), proj_u)), [x]) <= 1e-4
            x.zero_grad()
            assert gradcheck(lambda: ag.tsum(ag.mul(ag.downsample_nearest_x2(x), proj_d)), [x]) <= 1e-4

    def test_odd_downsample_rejected(self, rng):
        with pytest.raises(ShapeError):
            ag.downsample_nearest_x2(Tensor(rng.normal(0, 1, (1, 1, 5, 5))))


class TestActivations:
    def test_values(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]))
        assert np.allclose(ag.relu(x).data, [0.0, 0.0, 2.0])
        assert np.allclose(ag.lrelu(x).data, [-0.2, 0.0, 2.0])
        assert np.allclose(ag.sigmoid(Tensor(np.array([0.0]))).data, [0.5])
        assert np.allclose(ag.softplus(Tensor(np.array([0.0]))).data, [np.log(2.0)])

    def test_sigmoid_extremes_stable(self):
        x = Tensor(np.array([-500.0, 500.0]))
        out = ag.sigmoid(x)
        assert out.data[0] >= 0.0 and out.data[1] <= 1.0
        big = ag.softplus(Tensor(np.array([800.0])))
        assert big.data[0] == pytest.approx(800.0)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(0, 1, (3, 4)), requires_grad=True)
        backward(ag.tsum(x))
        assert np.array_equal(x.grad, np.ones_like(x.data))

    def test_linearity(self, rng):
        base = rng.normal(0, 1, (2, 2))
        x1 = Tensor(base.copy(), requires_grad=True)
        backward(ag.tsum(ag.mul(x1, x1)))
        g1 = x1.grad.copy()

        x2 = Tensor(base.copy(), requires_grad=True)
        loss = ag.add(ag.mul(ag.tsum(ag.mul(x2, x2)), 2.0), ag.mul(ag.tsum(x2), 3.0))
        backward(loss)
        assert np.allclose(x2.grad, 2.0 * g1 + 3.0, atol=1e-6)

    def test_scalar_loss_required(self, rng):
        x = Tensor(rng.normal(0, 1, (2, 2)), requires_grad=True)
        with pytest.raises(AutogradError):
            backward(ag.mul(x, 2.0))

    def test_detached_graph_rejected(self):
        with pytest.raises(AutogradError):
            backward(Tensor(np.array(1.0)))

    def test_repeated_backward_rejected(self, rng):
        x = Tensor(rng.normal(0, 1, (2, 2)), requires_grad=True)
        loss = ag.tsum(x)
        backward(loss)
        with pytest.raises(AutogradError):
            backward(loss)

    def test_grad_accumulates_across_graphs(self, rng):
        x = Tensor(rng.normal(0, 1, (2, 2)), requires_grad=True)
        backward(ag.tsum(x))
        backward(ag.tsum(ag.mul(x, 2.0)))
        assert np.allclose(x.grad, 3.0)


class TestNumericalGuards:
    def test_log_of_negative_raises_with_op_name(self, rng):
        x = Tensor(np.array([-1.0, 2.0]))
        with pytest.raises(NumericalError, match="log"):
            ag.log(x)

    def test_overflow_raises(self):
        x = Tensor(np.array([1e30], dtype=np.float32))
        with pytest.raises(NumericalError, match="mul"):
            ag.mul(x, x)

    def test_division_by_zero_raises(self):
        with pytest.raises(NumericalError, match="div"):
            ag.div(Tensor(np.array([1.0])), Tensor(np.array([0.0])))


class TestDeterminism:
    def test_bit_identical_forward_backward(self):
        def run():
            r = np.random.default_rng(42)
            x = Tensor(r.normal(0, 1, (2, 3, 8, 8)).astype(np.float32), requires_grad=True)
            w = Tensor(r.normal(0, 0.2, (4, 3, 3, 3)).astype(np.float32), requires_grad=True)
            out = ag.relu(ag.conv2d(x, w, None, 1, 1))
            loss = ag.tmean(ag.mul(out, out))
            backward(loss)
            return loss.data.copy(), x.grad.copy(), w.grad.copy()

        a = run()
        b = run()
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


class TestDenseAndShapes:
    def test_dense_affine(self, rng):
        x = Tensor(rng.normal(0, 1, (3, 4)))
        w = Tensor(np.eye(4))
        b = Tensor(np.arange(4.0))
        out = ag.dense(x, w, b)
        assert np.allclose(out.data, x.data + np.arange(4.0))

    def test_dense_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ag.dense(Tensor(rng.normal(0, 1, (3, 4))), Tensor(rng.normal(0, 1, (5, 2))))

    def test_concat_and_split_gradients(self, rng):
        a = Tensor(rng.normal(0, 1, (1, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(0, 1, (1, 3, 3, 3)), requires_grad=True)
        out = ag.concat_channels([a, b])
        assert out.data.shape == (1, 5, 3, 3)
        backward(ag.tsum(ag.mul(out, 2.0)))
        assert np.allclose(a.grad, 2.0) and np.allclose(b.grad, 2.0)

    def test_concat_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ag.concat_channels([Tensor(rng.normal(0, 1, (1, 2, 3, 3))),
                                Tensor(rng.normal(0, 1, (1, 2, 4, 4)))])

    def test_pad_replicate_values(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        out = ag.pad_replicate(x, 1)
        assert out.data.shape == (1, 1, 4, 4)
        assert out.data[0, 0, 0, 0] == 0.0
        assert out.data[0, 0, 3, 3] == 3.0


class TestPrecisionMode:
    def test_context_switches_dtype(self):
        assert Tensor(np.zeros(2)).dtype == np.float32
        with precision("float64"):
            assert Tensor(np.zeros(2)).dtype == np.float64
        assert Tensor(np.zeros(2)).dtype == np.float32
