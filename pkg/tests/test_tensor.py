"""Tests for the tensor kernel: forward oracles, gradient checks, determinism.

Forward values are verified against naive scalar-loop references written
independently in this file; gradients are verified against central finite
differences (grad_check) in float64.
"""

import numpy as np
import pytest

from streamvsr import tensor as T
from streamvsr.errors import NonFiniteError, ShapeMismatchError
from streamvsr.rng import make_rng


# ---------------------------------------------------------------------------
# naive references (oracles)
# ---------------------------------------------------------------------------


def naive_conv3d(x, w, stride, padding):
    """Direct 7-loop conv3d reference. Intentionally slow and obvious."""
    b, ci, d, h, wd = x.shape
    co, _, kd, kh, kw = w.shape
    sd, sh, sw = stride
    pd, ph, pw = padding
    xp = np.zeros((b, ci, d + 2 * pd, h + 2 * ph, wd + 2 * pw), dtype=np.float64)
    xp[:, :, pd : pd + d, ph : ph + h, pw : pw + wd] = x
    od = (d + 2 * pd - kd) // sd + 1
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((b, co, od, oh, ow), dtype=np.float64)
    for bi in range(b):
        for oc in range(co):
            for z in range(od):
                for y in range(oh):
                    for xx in range(ow):
                        acc = 0.0
                        for ic in range(ci):
                            for i in range(kd):
                                for j in range(kh):
                                    for k in range(kw):
                                        acc += (
                                            xp[bi, ic, z * sd + i, y * sh + j, xx * sw + k]
                                            * w[oc, ic, i, j, k]
                                        )
                        out[bi, oc, z, y, xx] = acc
    return out


def rand(shape, seed, dtype=np.float64, scale=1.0):
    return (make_rng(seed, "test-tensor").standard_normal(shape) * scale).astype(dtype)


class TestForwardValues:
    """Fixed-value and oracle-checked forward behavior."""

    def test_softmax_uniform(self):
        y = T.softmax(T.tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(y.data, [1 / 3, 1 / 3, 1 / 3], rtol=0, atol=1e-7)

    def test_matmul_identity(self):
        m = rand((2, 2), 1)
        eye = T.tensor(np.eye(2), dtype=np.float64)
        np.testing.assert_array_equal(T.matmul(eye, T.tensor(m, dtype=np.float64)).data, m)

    def test_conv3d_stride_arithmetic(self):
        # stride (1,2,2) over 3x8x8, 3x3x3 kernel, pad 1 -> 3x4x4 per channel
        x = T.tensor(rand((1, 2, 3, 8, 8), 2))
        w = T.tensor(rand((5, 2, 3, 3, 3), 3))
        y = T.conv3d(x, w, stride=(1, 2, 2), padding=1)
        assert y.shape == (1, 5, 3, 4, 4)

    @pytest.mark.parametrize(
        "stride,padding",
        [((1, 1, 1), (0, 0, 0)), ((1, 2, 2), (1, 1, 1)), ((4, 1, 1), (0, 1, 1)), ((2, 2, 2), (1, 0, 1))],
    )
    def test_conv3d_matches_naive(self, stride, padding):
        x = rand((2, 3, 5, 6, 7), 4)
        w = rand((4, 3, 2, 3, 3), 5)
        got = T.conv3d(T.tensor(x, dtype=np.float64), T.tensor(w, dtype=np.float64), stride, padding)
        want = naive_conv3d(x, w, stride, padding)
        np.testing.assert_allclose(got.data, want, rtol=1e-12, atol=1e-12)

    def test_conv3d_crop_is_bitexact(self):
        # cropping input rows/cols crops the output bit-exactly (stability the
        # local decoder relies on)
        x = rand((1, 8, 3, 20, 24), 6, np.float32)
        w = rand((6, 8, 1, 3, 3), 7, np.float32)
        full = T.conv3d(T.tensor(x, np.float32), T.tensor(w, np.float32), (1, 1, 1), (0, 0, 0))
        crop = T.conv3d(
            T.tensor(x[:, :, :, 4:15, 2:19], np.float32), T.tensor(w, np.float32), (1, 1, 1), (0, 0, 0)
        )
        assert (crop.data == full.data[:, :, :, 4:13, 2:17]).all()

    def test_masked_softmax_zeroes_excluded(self):
        x = T.tensor(rand((2, 5), 8))
        mask = np.array([[True, True, False, True, False], [True, True, True, True, True]])
        y = T.softmax(x, axis=-1, mask=mask)
        assert (y.data[~mask] == 0).all()
        np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
        # masked softmax over the allowed lanes == plain softmax of those lanes
        sub = T.softmax(T.tensor(x.data[0, [0, 1, 3]], dtype=np.float64))
        np.testing.assert_allclose(y.data[0, [0, 1, 3]], sub.data, atol=1e-12)

    def test_layer_norm_zero_mean_unit_var(self):
        x = T.tensor(rand((4, 16), 9), np.float64)
        g = T.tensor(np.ones(16), dtype=np.float64)
        b = T.tensor(np.zeros(16), dtype=np.float64)
        y = T.layer_norm(x, g, b)
        np.testing.assert_allclose(y.data.mean(axis=-1), 0, atol=1e-10)
        np.testing.assert_allclose(y.data.var(axis=-1), 1, atol=1e-4)

    def test_repeat_is_nearest_upsample(self):
        x = T.tensor([[1.0, 2.0]])
        y = T.repeat(x, 2, axis=1)
        np.testing.assert_array_equal(y.data, [[1, 1, 2, 2]])

    def test_nonfinite_raises(self):
        with pytest.raises(NonFiniteError):
            T.div(T.tensor([1.0]), T.tensor([0.0]))
        with pytest.raises(NonFiniteError):
            T.log(T.tensor([-1.0]))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeMismatchError):
            T.matmul(T.tensor(np.ones((2, 3))), T.tensor(np.ones((4, 2))))
        with pytest.raises(ShapeMismatchError):
            T.add(T.tensor([1.0], dtype=np.float32), T.tensor([1.0], dtype=np.float64))


class TestGradients:
    """Reverse-mode vs central finite differences, float64."""

    def test_sum_of_squares_exact(self):
        err = T.grad_check(lambda x: T.sum_(T.square(x)), T.tensor([1.0, 2.0], np.float64))
        assert err <= 1e-6

    @pytest.mark.parametrize("seed", range(4))
    def test_elementwise_chain(self, seed):
        x = T.tensor(rand((3, 7), 10 + seed, scale=0.7), np.float64)

        def f(t):
            return T.sum_(T.mul(T.sigmoid(t), T.tanh(t)) + T.gelu(t) * T.exp(-t))

        assert T.grad_check(f, x) <= 1e-4

    def test_log_sqrt_div(self):
        x = T.tensor(np.abs(rand((2, 5), 14)) + 0.5, np.float64)

        def f(t):
            return T.sum_(T.log(t) + T.sqrt(t) + T.div(T.tensor(np.ones(1), np.float64), t))

        assert T.grad_check(f, x) <= 1e-4

    def test_matmul_batched(self):
        x = T.tensor(rand((2, 3, 4), 15), np.float64)
        w = rand((4, 5), 16)

        def f(t):
            return T.sum_(T.square(T.matmul(t, T.tensor(w, np.float64))))

        assert T.grad_check(f, x) <= 1e-4

    @pytest.mark.parametrize("stride,padding", [((1, 1, 1), (1, 1, 1)), ((1, 2, 2), (0, 1, 1))])
    def test_conv3d_input_and_weight(self, stride, padding):
        xv = rand((1, 2, 3, 6, 6), 17, scale=0.5)
        wv = rand((3, 2, 3, 3, 3), 18, scale=0.5)

        def fx(t):
            return T.sum_(T.square(T.conv3d(t, T.tensor(wv, np.float64), stride, padding)))

        def fw(t):
            return T.sum_(T.square(T.conv3d(T.tensor(xv, np.float64), t, stride, padding)))

        assert T.grad_check(fx, T.tensor(xv, np.float64)) <= 1e-4
        assert T.grad_check(fw, T.tensor(wv, np.float64)) <= 1e-4

    def test_softmax_masked(self):
        x = T.tensor(rand((3, 6), 19), np.float64)
        mask = make_rng(20).random((3, 6)) > 0.3
        mask[:, 0] = True
        w = rand((3, 6), 21)

        def f(t):
            return T.sum_(T.mul(T.softmax(t, axis=-1, mask=mask), T.tensor(w, np.float64)))

        assert T.grad_check(f, x) <= 1e-4

    def test_layer_norm(self):
        x = T.tensor(rand((4, 8), 22), np.float64)
        g = T.tensor(rand((8,), 23), np.float64)
        b = T.tensor(rand((8,), 24), np.float64)

        def f(t):
            return T.sum_(T.square(T.layer_norm(t, g, b)))

        assert T.grad_check(f, x) <= 1e-4
        # and w.r.t. gain/bias
        xv = T.tensor(x.data, np.float64)
        assert T.grad_check(lambda t: T.sum_(T.square(T.layer_norm(xv, t, b))), g) <= 1e-4
        assert T.grad_check(lambda t: T.sum_(T.square(T.layer_norm(xv, g, t))), b) <= 1e-4

    def test_shape_ops(self):
        x = T.tensor(rand((2, 3, 4), 25), np.float64)

        def f(t):
            y = T.transpose(T.reshape(t, (2, 12)), (1, 0))
            y = T.concat([y, y], axis=1)
            y = T.pad(y, ((1, 1), (0, 2)))
            y = T.repeat(y, 2, axis=0)
            return T.sum_(T.square(y[3:10, 1:5]))

        assert T.grad_check(f, x) <= 1e-4

    def test_attention_shaped_composition(self):
        # q/k/v projections + softmax + weighted sum on a 4-token sequence
        dm = 8
        wq, wk, wv = (rand((dm, dm), 30 + i, scale=0.4) for i in range(3))
        x = T.tensor(rand((4, dm), 33, scale=0.6), np.float64)

        def f(t):
            q = T.matmul(t, T.tensor(wq, np.float64))
            k = T.matmul(t, T.tensor(wk, np.float64))
            v = T.matmul(t, T.tensor(wv, np.float64))
            att = T.softmax(
                T.mul(T.matmul(q, T.transpose(k, (1, 0))), T.tensor(dm**-0.5, np.float64))
            )
            return T.sum_(T.matmul(att, v))

        assert T.grad_check(f, x) <= 1e-4

    def test_grad_accumulates_across_tapes(self):
        x = T.tensor([1.0, 2.0], np.float64, requires_grad=True)
        for _ in range(2):
            with T.GradTape() as tape:
                tape.backward(T.sum_(T.square(x)))
        np.testing.assert_allclose(x.grad, [4.0, 8.0], atol=1e-12)

    def test_pause_recording_blocks_gradients(self):
        x = T.tensor([3.0], np.float64, requires_grad=True)
        with T.GradTape() as tape:
            with T.pause_recording():
                frozen = T.square(x)  # not recorded
            loss = T.sum_(T.mul(x, frozen.detach()))
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, [9.0])


class TestDeterminism:
    def test_ops_bit_identical_across_runs(self):
        def run():
            x = T.tensor(rand((2, 4, 6, 8, 8), 40, np.float32), np.float32)
            w = T.tensor(rand((5, 4, 3, 3, 3), 41, np.float32), np.float32)
            y = T.conv3d(x, w, (1, 2, 2), 1)
            z = T.softmax(T.reshape(y, (2, -1)), axis=-1)
            return z.data.tobytes()

        assert run() == run()

    def test_philox_streams_independent_and_stable(self):
        a = make_rng(7, "stream", 1).standard_normal(4)
        b = make_rng(7, "stream", 1).standard_normal(4)
        c = make_rng(7, "stream", 2).standard_normal(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
