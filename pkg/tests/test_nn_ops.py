import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal import nn
from trimodal.errors import DataError, DimensionError, ParameterError, StateError
from trimodal.nn import functional as F
from trimodal.nn.params import LayerParams
from trimodal.rng import Rng


def dense_params(W, b):
    return LayerParams("d", {"weight": np.array(W, float), "bias": np.array(b, float)})


class TestDense:
    def test_identity(self):
        y = nn.dense_forward(np.array([[3.0, 4.0]]), dense_params(np.eye(2), [0, 0]))
        assert y.tolist() == [[3.0, 4.0]]

    def test_hand_matmul(self):
        y = nn.dense_forward(np.array([[1.0, 1.0]]), dense_params([[1, 2], [3, 4]], [0, 0]))
        assert y.tolist() == [[3.0, 7.0]]

    def test_zero_weight(self):
        y = nn.dense_forward(np.array([[9.0, -2.0]]), dense_params(np.zeros((2, 2)), [5, 6]))
        assert y.tolist() == [[5.0, 6.0]]

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\[1, 3\].*\[2, 2\]"):
            nn.dense_forward(np.ones((1, 3)), dense_params(np.eye(2), [0, 0]))


def conv_params(K, b):
    return LayerParams("c", {"weight": np.asarray(K, float), "bias": np.asarray(b, float)})


def conv_bruteforce(x, K, b):
    B, H, W, C = x.shape
    co, k, _, _ = K.shape
    p = k // 2
    y = np.zeros((B, H, W, co))
    for n in range(B):
        for i in range(H):
            for j in range(W):
                for o in range(co):
                    acc = b[o]
                    for di in range(k):
                        for dj in range(k):
                            ii, jj = i + di - p, j + dj - p
                            if 0 <= ii < H and 0 <= jj < W:
                                acc += np.dot(K[o, di, dj], x[n, ii, jj])
                    y[n, i, j, o] = acc
    return y


class TestConv:
    def test_1x1_identity(self):
        x = Rng(0).normal(size=(2, 4, 5, 1))
        y = nn.conv2d_same_forward(x, conv_params(np.ones((1, 1, 1, 1)), [0.0]))
        assert np.array_equal(y, x)

    def test_all_ones_kernel_on_constant_input(self):
        y = nn.conv2d_same_forward(np.ones((1, 3, 3, 1)), conv_params(np.ones((1, 3, 3, 1)), [0.0]))
        assert y[0, :, :, 0].tolist() == [[4, 6, 4], [6, 9, 6], [4, 6, 4]]

    def test_zero_kernel_bias(self):
        y = nn.conv2d_same_forward(np.ones((1, 4, 4, 2)), conv_params(np.zeros((3, 3, 3, 2)), [0.5] * 3))
        assert np.all(y == 0.5)

    def test_matches_loop_oracle(self):
        r = Rng(3)
        x = r.normal(size=(2, 5, 4, 3))
        K = r.normal(size=(4, 3, 3, 3))
        b = r.normal(size=4)
        assert np.allclose(nn.conv2d_same_forward(x, conv_params(K, b)), conv_bruteforce(x, K, b), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            nn.conv2d_same_forward(np.ones((1, 4, 4, 2)), conv_params(np.zeros((1, 3, 3, 3)), [0.0]))

    @given(h=st.integers(1, 9), w=st.integers(1, 9))
    @settings(max_examples=30, deadline=None)
    def test_preserves_spatial_shape(self, h, w):
        y = nn.conv2d_same_forward(np.ones((1, h, w, 2)), conv_params(np.ones((3, 3, 3, 2)), [0.0] * 3))
        assert y.shape == (1, h, w, 3)


class TestMaxPool:
    def test_single_window(self):
        assert nn.maxpool2x2(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)).ravel().tolist() == [4.0]

    def test_ramp(self):
        x = np.arange(16.0).reshape(1, 4, 4, 1)
        assert nn.maxpool2x2(x)[0, :, :, 0].tolist() == [[5, 7], [13, 15]]

    def test_constant(self):
        assert np.all(nn.maxpool2x2(np.full((2, 4, 6, 3), 2.5)) == 2.5)

    def test_odd_dims(self):
        with pytest.raises(DimensionError):
            nn.maxpool2x2(np.ones((1, 3, 4, 1)))

    def test_backward_routes_to_single_position(self):
        x = Rng(4).normal(size=(2, 6, 4, 3))
        layer = nn.MaxPool2x2()
        layer.forward(x, "train", None)
        dy = Rng(5).normal(size=(2, 3, 2, 3))
        dx = layer.backward(dy)
        win = dx.reshape(2, 3, 2, 2, 2, 3)
        assert np.count_nonzero(dx) == dy.size
        assert np.allclose(win.sum(axis=(2, 4)), dy, atol=0)

    def test_tie_goes_to_first_in_row_major(self):
        layer = nn.MaxPool2x2()
        layer.forward(np.ones((1, 2, 2, 1)), "train", None)
        dx = layer.backward(np.ones((1, 1, 1, 1)))
        assert dx[0, :, :, 0].tolist() == [[1, 0], [0, 0]]


def bn_params(c):
    return LayerParams(
        "bn",
        {"gamma": np.ones(c), "beta": np.zeros(c), "running_mean": np.zeros(c), "running_var": np.ones(c)},
        trainable={"gamma", "beta"},
    )


class TestBatchNorm:
    def test_plus_minus_one(self):
        y = nn.batchnorm_forward(np.array([[-1.0], [1.0]]), bn_params(1), "train")
        assert np.allclose(y.ravel(), [-1, 1], atol=1e-4)
        assert np.allclose(y.ravel(), np.array([-1, 1]) / math.sqrt(1 + 1e-5), atol=1e-15)

    def test_already_standardized(self):
        x = np.array([[-1.5], [-0.5], [0.5], [1.5]])
        x = (x - x.mean()) / x.std()
        assert np.allclose(nn.batchnorm_forward(x, bn_params(1), "train"), x, atol=1e-4)

    def test_infer_with_batch_stats_matches_train(self):
        x = Rng(1).normal(size=(5, 3, 3, 4))
        train = nn.batchnorm_forward(x, bn_params(4), "train")
        p = bn_params(4)
        p["running_mean"] = x.mean(axis=(0, 1, 2))
        p["running_var"] = x.var(axis=(0, 1, 2))
        assert np.allclose(nn.batchnorm_forward(x, p, "infer"), train, atol=1e-12, rtol=0)

    def test_running_stats_momentum(self):
        p = bn_params(1)
        nn.batchnorm_forward(np.array([[1.0], [3.0]]), p, "train")
        assert p["running_mean"][0] == pytest.approx(0.1 * 2.0)
        assert p["running_var"][0] == pytest.approx(0.9 + 0.1 * 1.0)

    def test_batch_of_one_rejected(self):
        with pytest.raises(DataError):
            nn.batchnorm_forward(np.ones((1, 3)), bn_params(3), "train")


class TestActivation:
    def test_relu(self):
        assert nn.apply_activation("relu", np.array([-2.0, 3.0])).tolist() == [0.0, 3.0]

    def test_softmax_symmetric(self):
        assert nn.apply_activation("softmax", np.array([0.0, 0.0])).tolist() == [0.5, 0.5]

    def test_softmax_closed_form(self):
        p = nn.apply_activation("softmax", np.array([math.log(1), math.log(3)]))
        assert np.allclose(p, [0.25, 0.75], atol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            nn.apply_activation("tanh", np.zeros(2))

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=6),
        st.floats(-100, 100),
    )
    def test_softmax_rows_sum_and_shift(self, xs, c):
        x = np.array(xs)
        p = nn.softmax(x)
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.allclose(nn.softmax(x + c), p, atol=1e-12, rtol=0)

    def test_softmax_large_inputs_stay_finite(self):
        assert np.allclose(nn.softmax(np.array([1000.0, 0.0])), [1.0, 0.0])


class TestDropout:
    def test_rate_zero_identity(self):
        x = np.arange(6.0)
        assert np.array_equal(nn.inverted_dropout(x, 0.0, "train", Rng(1)), x)

    @pytest.mark.parametrize("rate", [0.1, 0.5, 0.9])
    def test_infer_identity(self, rate):
        x = np.arange(6.0)
        assert np.array_equal(nn.inverted_dropout(x, rate, "infer", Rng(1)), x)

    def test_half_rate_mask_reproducible(self):
        x = Rng(0).normal(size=100) + 3.0
        y = nn.inverted_dropout(x, 0.5, "train", Rng(77))
        keep = Rng(77).random(100) >= 0.5
        assert np.array_equal(y[keep], 2 * x[keep])
        assert np.all(y[~keep] == 0)

    def test_rate_one_rejected(self):
        with pytest.raises(ParameterError):
            nn.inverted_dropout(np.ones(3), 1.0, "train", Rng(0))

    def test_mean_over_many_masks(self):
        x = np.array([1.0, -2.0, 0.5, 3.0])
        rate, n = 0.5, 10_000
        rng = Rng(2024)
        outs = np.stack([nn.inverted_dropout(x, rate, "train", rng) for _ in range(n)])
        se = np.abs(x) * math.sqrt(rate / (1 - rate)) / math.sqrt(n)
        assert np.all(np.abs(outs.mean(axis=0) - x) <= 3 * se)


def lstm_params(f, u, rng=None, scale=0.5):
    t = {}
    for g in F.GATES:
        t["W_" + g] = rng.normal(0, scale, (u, f)) if rng else np.zeros((u, f))
        t["U_" + g] = rng.normal(0, scale, (u, u)) if rng else np.zeros((u, u))
        t["b_" + g] = rng.normal(0, scale, u) if rng else np.zeros(u)
    return LayerParams("lstm", t)


class TestLSTM:
    def test_zero_params_zero_state(self):
        h, c = nn.lstm_cell_step(np.ones((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)), lstm_params(3, 4))
        assert np.all(h == 0) and np.all(c == 0)

    def test_zero_params_keeps_half_of_cell(self):
        # i = f = o = 0.5, g = 0  =>  c = 0.5 c_prev
        c_prev = np.array([[0.4, -1.0]])
        h, c = nn.lstm_cell_step(np.ones((1, 3)), np.zeros((1, 2)), c_prev, lstm_params(3, 2))
        assert np.allclose(c, 0.5 * c_prev, atol=1e-15)
        assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev), atol=1e-15)

    def test_saturated_gates_carry_cell(self):
        p = lstm_params(2, 3)
        p["b_f"] = np.full(3, 20.0)
        p["b_i"] = np.full(3, -20.0)
        v = np.array([[0.3, -0.7, 1.2]])
        h, c = nn.lstm_cell_step(np.zeros((1, 2)), np.zeros((1, 3)), v, p)
        assert np.allclose(c, v, atol=1e-8)
        assert np.allclose(h, 0.5 * np.tanh(v), atol=1e-8)

    def test_single_step_sequence(self):
        r = Rng(8)
        p = lstm_params(3, 4, r)
        x = r.normal(size=(2, 1, 3))
        out = nn.lstm_layer_forward(x, p, False, 0.0, "infer", None)
        h, _ = nn.lstm_cell_step(x[:, 0], np.zeros((2, 4)), np.zeros((2, 4)), p)
        assert np.array_equal(out, h)

    def test_zero_params_zero_output(self):
        out = nn.lstm_layer_forward(np.ones((2, 5, 3)), lstm_params(3, 4), True, 0.0, "infer", None)
        assert out.shape == (2, 5, 4) and np.all(out == 0)

    @pytest.mark.parametrize("mode", ["infer", "train"])
    def test_matches_step_loop_bitwise(self, mode):
        r = Rng(10)
        p = lstm_params(3, 5, r)
        x = r.normal(size=(3, 6, 3))
        out = nn.lstm_layer_forward(x, p, True, 0.0, mode, Rng(0))
        h = c = np.zeros((3, 5))
        for t in range(6):
            h, c = nn.lstm_cell_step(x[:, t], h, c, p)
            assert np.array_equal(out[:, t], h)

    def test_recurrent_dropout_single_mask(self):
        r = Rng(11)
        p = lstm_params(2, 4, r)
        x = r.normal(size=(3, 5, 2))
        out = nn.lstm_layer_forward(x, p, True, 0.2, "train", Rng(99))
        mask = (Rng(99).random((3, 4)) >= 0.2) / 0.8
        h = c = np.zeros((3, 4))
        for t in range(5):
            h, c = nn.lstm_cell_step(x[:, t], h * mask, c, p)
        assert np.allclose(out[:, -1], h, atol=1e-14)

    def test_empty_sequence(self):
        with pytest.raises(DataError):
            nn.lstm_layer_forward(np.ones((1, 0, 2)), lstm_params(2, 2), False, 0.0, "infer", None)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            nn.lstm_cell_step(np.ones((1, 4)), np.zeros((1, 2)), np.zeros((1, 2)), lstm_params(3, 2))


class TestCrossEntropy:
    def test_confident_correct(self):
        assert nn.softmax_cross_entropy(np.array([[30.0, -30.0]]), [0]) < 1e-9

    @pytest.mark.parametrize("label", [0, 1])
    def test_uniform_logits(self, label):
        assert nn.softmax_cross_entropy(np.zeros((1, 2)), [label]) == pytest.approx(math.log(2), abs=1e-12)

    def test_point_nine(self):
        loss = nn.softmax_cross_entropy(np.array([[math.log(9), 0.0]]), [0])
        assert loss == pytest.approx(-math.log(0.9), abs=1e-12)
        assert loss == pytest.approx(0.105361, abs=1e-6)

    def test_extreme_logits_finite(self):
        assert nn.softmax_cross_entropy(np.array([[800.0, -800.0]]), [1]) == pytest.approx(1600.0)

    def test_bad_label(self):
        with pytest.raises(DataError):
            nn.softmax_cross_entropy(np.zeros((2, 2)), [0, 2])


class TestBackprop:
    def test_dense_identity_sum(self):
        layer = nn.Dense(3, 3)
        layer.params["weight"] = np.eye(3)
        x = np.array([[1.0, -2.0, 5.0]])
        layer.forward(x, "train", None)
        layer.backward(np.ones((1, 3)))
        assert np.array_equal(layer.params.grads["weight"], np.tile(x, (3, 1)))

    def test_zero_seed_zero_grads(self):
        r = Rng(1)
        model = nn.Sequential([nn.Dense(4, 5, "d1", r), nn.ReLU(), nn.Dense(5, 2, "d2", r)])
        model.forward(r.normal(size=(3, 4)), "train", r)
        grads = nn.backprop(model, np.zeros((3, 2)))
        assert all(np.all(g == 0) for g in grads.values())

    def test_backward_before_forward(self):
        with pytest.raises(StateError):
            nn.Dense(2, 2).backward(np.ones((1, 2)))

    def test_nontrainable_get_no_gradient(self):
        layer = nn.BatchNorm(3, "bn")
        layer.forward(Rng(0).normal(size=(4, 3)), "train", None)
        layer.backward(np.ones((4, 3)))
        assert set(layer.params.grads) == {"gamma", "beta"}


class TestGradientCheck:
    def test_square(self):
        x = np.array([3.0])
        err = nn.gradient_check(lambda: float(x[0] ** 2), {"x": x}, {"x": np.array([6.0])})
        assert err < 1e-8

    def test_detects_wrong_gradient(self):
        x = np.array([3.0])
        assert nn.gradient_check(lambda: float(x[0] ** 2), {"x": x}, {"x": np.array([5.0])}) > 0.1

    def test_dense_relu_ce(self):
        r = Rng(21)
        model = nn.Sequential([nn.Dense(3, 5, "d1", r), nn.ReLU(), nn.Dense(5, 2, "d2", r)])
        x = r.normal(size=(4, 3))
        err = nn.model_gradient_check(model, x, np.array([0, 1, 1, 0]), samples=5)
        assert err < 1e-6

    @pytest.mark.parametrize(
        "build, shape",
        [
            (lambda r: [nn.Conv2D(2, 3, 3, "c", r), nn.Flatten(), nn.Dense(48, 2, "d", r)], (2, 4, 4, 2)),
            (lambda r: [nn.Conv2D(2, 3, 1, "c", r), nn.Flatten(), nn.Dense(48, 2, "d", r)], (2, 4, 4, 2)),
            (lambda r: [nn.BatchNorm(2, "bn"), nn.Flatten(), nn.Dense(32, 2, "d", r)], (3, 4, 4, 2)),
            (lambda r: [nn.MaxPool2x2(), nn.Flatten(), nn.Dense(8, 2, "d", r)], (2, 4, 4, 2)),
            (lambda r: [nn.Flatten(), nn.Dense(32, 6, "d1", r), nn.Dropout(0.5), nn.Dense(6, 2, "d2", r)], (2, 4, 4, 2)),
            (lambda r: [nn.LSTM(3, 4, True, 0.2, "l1", r), nn.LSTM(4, 5, False, 0.2, "l2", r), nn.Dense(5, 2, "d", r)], (3, 4, 3)),
        ],
        ids=["conv3x3", "conv1x1", "batchnorm", "maxpool", "dropout", "lstm"],
    )
    def test_layers(self, build, shape):
        r = Rng(31)
        model = nn.Sequential(build(r))
        x = r.normal(size=shape)
        labels = np.arange(shape[0]) % 2
        assert nn.model_gradient_check(model, x, labels, samples=None, check_input=True) < 1e-4


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        nn.adam_step(p, {"w": np.zeros(2)}, nn.AdamState())
        assert p["w"].tolist() == [1.0, -2.0]

    @pytest.mark.parametrize("g", [0.3, -7.0, 1e-3])
    def test_first_step_is_lr_sign(self, g):
        p = {"w": np.array([0.0])}
        state = nn.AdamState()
        nn.adam_step(p, {"w": np.array([g])}, state)
        assert abs(p["w"][0] + 1e-3 * math.copysign(1, g)) < 1e-3 * 1e-6 + 1e-3 * 1e-8 / abs(g)
        assert state.t == 1

    def test_quadratic_descent(self):
        p = {"w": np.array([1.0])}
        state = nn.AdamState(lr=0.01)
        fs = []
        for _ in range(200):
            fs.append(0.5 * p["w"][0] ** 2)
            nn.adam_step(p, {"w": p["w"].copy()}, state)
        fs.append(0.5 * p["w"][0] ** 2)
        assert abs(p["w"][0]) < 0.5
        assert all(fs[i + 50] < fs[i] for i in range(len(fs) - 50))
        assert all(np.all(v >= 0) for v in state.v.values())

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            nn.adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, nn.AdamState())
