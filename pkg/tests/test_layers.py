import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import GRAD_TOL, SEEDS, check_layer_gradients
from harkit import layers as L
from harkit.errors import DimensionError, ParameterError
from harkit.tensor import make_rng


# ---------------------------------------------------------------- oracles

def conv_oracle(x, k, b, padding):
    n, h, w, c = x.shape
    kh, kw, _, f = k.shape
    if padding == "same":
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        oh, ow = h, w
    else:
        ph = pw = 0
        oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((n, oh, ow, f))
    for i in range(n):
        for y in range(oh):
            for xx in range(ow):
                for o in range(f):
                    s = b[o]
                    for dy in range(kh):
                        for dx in range(kw):
                            yy, xi = y + dy - ph, xx + dx - pw
                            if 0 <= yy < h and 0 <= xi < w:
                                for ch in range(c):
                                    s += x[i, yy, xi, ch] * k[dy, dx, ch, o]
                    out[i, y, xx, o] = s
    return out


def scalar_sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_lstm_step(x, h, c, wx, wh, b):
    """Textbook LSTM on scalars; wx/wh/b are dicts keyed by gate."""
    i = scalar_sigmoid(x * wx["i"] + h * wh["i"] + b["i"])
    f = scalar_sigmoid(x * wx["f"] + h * wh["f"] + b["f"])
    g = math.tanh(x * wx["c"] + h * wh["c"] + b["c"])
    o = scalar_sigmoid(x * wx["o"] + h * wh["o"] + b["o"])
    c_new = f * c + i * g
    return o * math.tanh(c_new), c_new


GATES = "ifco"


# ---------------------------------------------------------------- relu

def test_relu_values():
    out, _ = L.relu_forward(np.array([-1.0, 0.0, 2.0]))
    assert out.tolist() == [0.0, 0.0, 2.0]


def test_relu_nonnegative_identity():
    x = np.abs(np.random.default_rng(0).normal(size=(3, 4)))
    assert np.array_equal(L.relu_forward(x)[0], x)


def test_relu_backward_mask():
    out, cache = L.relu_forward(np.array([-1.0, 2.0]))
    assert L.relu_backward(cache, np.array([5.0, 5.0])).tolist() == [0.0, 5.0]


# ---------------------------------------------------------------- conv2d

def test_conv_identity_kernel_same_padding():
    x = np.random.default_rng(0).normal(size=(2, 5, 6, 1))
    k = np.zeros((3, 3, 1, 1))
    k[1, 1, 0, 0] = 1.0
    out, _ = L.conv2d_forward(x, k, np.zeros(1), "same")
    assert np.array_equal(out, x)


def test_conv_all_ones_valid():
    out, _ = L.conv2d_forward(np.ones((1, 3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1), "valid")
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9.0


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv_matches_direct_loop(seed, padding):
    r = np.random.default_rng(seed)
    x, k, b = r.normal(size=(1, 5, 5, 2)), r.normal(size=(3, 3, 2, 4)), r.normal(size=4)
    out, _ = L.conv2d_forward(x, k, b, padding)
    assert np.max(np.abs(out - conv_oracle(x, k, b, padding))) < 1e-10


def test_conv_spatial_dims():
    x = np.zeros((1, 7, 9, 2))
    assert L.conv2d_forward(x, np.zeros((3, 3, 2, 5)), None, "same")[0].shape == (1, 7, 9, 5)
    assert L.conv2d_forward(x, np.zeros((3, 5, 2, 5)), None, "valid")[0].shape == (1, 5, 5, 5)


def test_conv_errors():
    with pytest.raises(DimensionError, match="channels"):
        L.conv2d_forward(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 3, 1)))
    with pytest.raises(DimensionError):
        L.conv2d_forward(np.zeros((1, 2, 2, 1)), np.zeros((3, 3, 1, 1)), padding="valid")


def test_conv_large_batch_chunks_match(monkeypatch):
    r = np.random.default_rng(3)
    x, k, b = r.normal(size=(5, 6, 6, 3)), r.normal(size=(3, 3, 3, 4)), r.normal(size=4)
    full, cache = L.conv2d_forward(x, k, b)
    d = r.normal(size=full.shape)
    grads = L.conv2d_backward(cache, d)
    monkeypatch.setattr(L, "_IM2COL_BUDGET", 1)
    chunked, ccache = L.conv2d_forward(x, k, b)
    cgrads = L.conv2d_backward(ccache, d)
    np.testing.assert_allclose(chunked, full, atol=1e-12)
    for a, c in zip(grads, cgrads):
        np.testing.assert_allclose(a, c, atol=1e-12)


# ---------------------------------------------------------------- pooling

def test_maxpool_window():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1)
    assert L.maxpool_forward(x, (2, 2))[0].item() == 4.0


def test_maxpool3d_keeps_time():
    out, _ = L.maxpool_forward(np.zeros((2, 5, 8, 8, 3)), (1, 2, 2), "3D")
    assert out.shape == (2, 5, 4, 4, 3)


def test_maxpool_truncates_remainder():
    x = np.arange(1.0, 26.0).reshape(1, 5, 5, 1)
    out, cache = L.maxpool_forward(x, (2, 2))
    assert out[..., 0].tolist() == [[[7.0, 9.0], [17.0, 19.0]]]
    dx = L.maxpool_backward(cache, np.ones_like(out))
    assert dx.shape == x.shape and dx[0, 4, :, 0].sum() == 0 and dx[0, :, 4, 0].sum() == 0


def test_maxpool_tie_goes_to_first():
    x = np.ones((1, 2, 2, 1))
    out, cache = L.maxpool_forward(x, (2, 2))
    dx = L.maxpool_backward(cache, np.ones_like(out))
    assert dx[0, :, :, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_maxpool_3d_general_pool():
    r = np.random.default_rng(0)
    x = r.permutation(2 * 4 * 4 * 4 * 2).reshape(2, 4, 4, 4, 2).astype(float)
    out, _ = L.maxpool_forward(x, (2, 2, 2), "3D")
    expect = x.reshape(2, 2, 2, 2, 2, 2, 2, 2).max(axis=(2, 4, 6))
    assert np.array_equal(out, expect)


def test_maxpool_pool_too_large():
    with pytest.raises(DimensionError):
        L.maxpool_forward(np.zeros((1, 1, 4, 1)), (2, 2))


def test_global_avg_pool_values():
    x = np.array([[1.0, 3.0], [5.0, 7.0]]).reshape(1, 2, 2, 1)
    assert L.global_avg_pool_forward(x)[0].item() == 4.0
    assert np.all(L.global_avg_pool_forward(np.full((2, 3, 3, 4), 2.5))[0] == 2.5)


def test_global_avg_pool_backward_spreads_evenly():
    out, cache = L.global_avg_pool_forward(np.zeros((1, 2, 3, 2)))
    dx = L.global_avg_pool_backward(cache, np.array([[6.0, 12.0]]))
    assert np.all(dx[..., 0] == 1.0) and np.all(dx[..., 1] == 2.0)


# ---------------------------------------------------------------- dense / flatten

def test_dense_identity_and_zero():
    x = np.random.default_rng(0).normal(size=(3, 4))
    assert np.array_equal(L.dense_forward(x, np.eye(4), np.zeros(4))[0], x)
    b = np.array([1.0, 2.0])
    assert np.array_equal(L.dense_forward(x, np.zeros((4, 2)), b)[0], np.tile(b, (3, 1)))


@pytest.mark.parametrize("seed", range(5))
def test_dense_matches_matmul_broadcast(seed):
    r = np.random.default_rng(seed)
    x, w, b = r.normal(size=(3, 5)), r.normal(size=(5, 2)), r.normal(size=2)
    expect = np.array([[sum(x[i, k] * w[k, j] for k in range(5)) + b[j] for j in range(2)] for i in range(3)])
    assert np.max(np.abs(L.dense_forward(x, w, b)[0] - expect)) < 1e-12


def test_dense_shape_error():
    with pytest.raises(DimensionError):
        L.dense_forward(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))


def test_flatten_row_major():
    x = np.arange(24.0).reshape(2, 3, 4)
    out, cache = L.flatten_forward(x)
    assert out.shape == (2, 12) and out[1].tolist() == list(range(12, 24))
    flat = np.ones((3, 5))
    assert np.array_equal(L.flatten_forward(flat)[0], flat)
    d = np.arange(24.0).reshape(2, 12)
    assert np.array_equal(L.flatten_backward(cache, d), d.reshape(2, 3, 4))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=5), st.integers(0, 2**32 - 1))
def test_flatten_roundtrip(shape, seed):
    x = np.random.default_rng(seed).normal(size=shape)
    out, cache = L.flatten_forward(x)
    assert np.array_equal(L.flatten_backward(cache, out), x)


# ---------------------------------------------------------------- batch norm

def _bn_state(c):
    return {"mean": np.zeros(c), "var": np.ones(c)}


def test_batchnorm_training_normalizes():
    x = np.random.default_rng(0).normal(3.0, 2.0, size=(16, 4, 4, 3))
    out, _ = L.batchnorm_forward(x, np.ones(3), np.zeros(3), _bn_state(3), "training")
    mean = out.mean(axis=(0, 1, 2))
    var = out.var(axis=(0, 1, 2))
    assert np.all(np.abs(mean) < 1e-9)
    assert np.all(np.abs(var - 1) < 1e-4)


def test_batchnorm_constant_channel_gives_beta():
    x = np.full((8, 3), 5.0)
    beta = np.array([0.5, -1.0, 2.0])
    out, _ = L.batchnorm_forward(x, np.ones(3), beta, _bn_state(3), "training")
    np.testing.assert_allclose(out, np.tile(beta, (8, 1)), atol=1e-12)


def test_batchnorm_inference_formula():
    state = {"mean": np.array([2.0]), "var": np.array([4.0])}
    out, _ = L.batchnorm_forward(np.array([[4.0]]), np.array([3.0]), np.array([1.0]), state, "inference", eps=1e-5)
    expect = 3.0 * (4.0 - 2.0) / math.sqrt(4.0 + 1e-5) + 1.0
    assert abs(out.item() - expect) < 1e-12
    assert abs(out.item() - 3.99999625) < 1e-7
    assert state["mean"].item() == 2.0 and state["var"].item() == 4.0


def test_batchnorm_running_stats_update_only_in_training():
    x = np.random.default_rng(1).normal(1.0, 3.0, size=(10, 2))
    state = _bn_state(2)
    L.batchnorm_forward(x, np.ones(2), np.zeros(2), state, "inference")
    assert np.array_equal(state["mean"], [0, 0]) and np.array_equal(state["var"], [1, 1])
    L.batchnorm_forward(x, np.ones(2), np.zeros(2), state, "training")
    np.testing.assert_allclose(state["mean"], 0.1 * x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(state["var"], 0.9 + 0.1 * x.var(axis=0), atol=1e-12)


def test_batchnorm_eps_must_be_positive():
    with pytest.raises(ParameterError):
        L.batchnorm_forward(np.zeros((2, 1)), np.ones(1), np.zeros(1), _bn_state(1), eps=0.0)


# ---------------------------------------------------------------- dropout

def test_dropout_rate_zero_and_inference_identity():
    x = np.random.default_rng(0).normal(size=(4, 5))
    assert np.array_equal(L.dropout_forward(x, 0.0, make_rng(1), "training")[0], x)
    assert np.array_equal(L.dropout_forward(x, 0.5, make_rng(1), "inference")[0], x)


def test_dropout_statistics():
    x = np.full((400, 500), 2.0)
    out, mask = L.dropout_forward(x, 0.2, make_rng(3), "training")
    assert abs(np.mean(out == 0) - 0.2) < 0.01
    assert abs(out.mean() - 2.0) / 2.0 < 0.02


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_validation(rate):
    with pytest.raises(ParameterError):
        L.dropout_forward(np.zeros(3), rate, make_rng(0))


# ---------------------------------------------------------------- softmax

def test_softmax_simple_values():
    np.testing.assert_allclose(L.softmax_forward(np.zeros((1, 3)))[0], [[1 / 3] * 3], atol=1e-15)
    np.testing.assert_allclose(L.softmax_forward(np.array([[0.0, math.log(2)]]))[0], [[1 / 3, 2 / 3]], atol=1e-15)


def test_softmax_large_logits_match_high_precision():
    z = [1000.0, 1000.1, 999.0]
    mpmath.mp.dps = 50
    ez = [mpmath.exp(mpmath.mpf(v)) for v in z]
    total = sum(ez)
    expect = [float(e / total) for e in ez]
    out = L.softmax_forward(np.array([z]))[0][0]
    assert np.all(np.isfinite(out))
    assert np.max(np.abs(out - expect)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-700, 700), min_size=1, max_size=8))
def test_softmax_rows_sum_to_one(vals):
    p = L.softmax_forward(np.array([vals]))[0]
    assert abs(p.sum() - 1.0) < 1e-9 and np.all(p >= 0)


# ---------------------------------------------------------------- time distributed

def test_time_distributed_identity_and_single_step():
    x = np.random.default_rng(0).normal(size=(2, 3, 4))
    assert np.array_equal(L.time_distributed_apply(lambda s: s, x), x)
    x1 = x[:, :1]
    relu = lambda s: L.relu_forward(s)[0]
    assert np.array_equal(L.time_distributed_apply(relu, x1)[:, 0], relu(x1[:, 0]))


def test_time_distributed_relu_matches_slices():
    x = np.random.default_rng(1).normal(size=(2, 3, 4, 4, 2))
    relu = lambda s: L.relu_forward(s)[0]
    out = L.time_distributed_apply(relu, x)
    for t in range(3):
        assert np.array_equal(out[:, t], relu(x[:, t]))


def test_time_distributed_error_has_time_index():
    def bad(s):
        raise DimensionError("boom")

    with pytest.raises(DimensionError, match="time step 0"):
        L.time_distributed_apply(bad, np.zeros((1, 2, 3)))


def test_time_distributed_layer_matches_folding():
    layer = L.TimeDistributed(L.Dropout(0.2))
    layer.build((3, 4, 4, 2))
    x = np.random.default_rng(2).normal(size=(2, 3, 4, 4, 2))
    out, _ = layer.forward(x, training=False)
    assert np.array_equal(out, x)


# ---------------------------------------------------------------- ConvLSTM

def _lstm_params(r, cin, f, k=3, scale=0.5):
    return (r.normal(scale=scale, size=(k, k, cin, 4 * f)), r.normal(scale=scale, size=(k, k, f, 4 * f)),
            r.normal(scale=scale, size=4 * f))


def test_convlstm_zero_fixed_point():
    x = np.random.default_rng(0).normal(size=(1, 4, 4, 2))
    z = np.zeros((1, 4, 4, 3))
    h, c, _ = L.convlstm2d_step(x, z, z, np.zeros((3, 3, 2, 12)), np.zeros((3, 3, 3, 12)), np.zeros(12))
    assert not h.any() and not c.any()


@pytest.mark.parametrize("seed", range(20))
def test_convlstm_1x1_matches_scalar_lstm(seed):
    r = np.random.default_rng(seed)
    k, rk, b = _lstm_params(r, 1, 1, k=1)
    wx = {g: k[0, 0, 0, j] for j, g in enumerate(GATES)}
    wh = {g: rk[0, 0, 0, j] for j, g in enumerate(GATES)}
    bb = {g: b[j] for j, g in enumerate(GATES)}
    xs = r.normal(size=4)
    h = c = 0.0
    hn = np.zeros((1, 1, 1, 1))
    cn = np.zeros((1, 1, 1, 1))
    for x in xs:
        h, c = scalar_lstm_step(x, h, c, wx, wh, bb)
        hn, cn, _ = L.convlstm2d_step(np.full((1, 1, 1, 1), x), hn, cn, k, rk, b)
        assert abs(hn.item() - h) < 1e-12 and abs(cn.item() - c) < 1e-12


def test_convlstm_forget_saturation():
    r = np.random.default_rng(0)
    f = 2
    b = np.zeros(4 * f)
    b[f:2 * f] = 50.0
    b[:f] = -50.0  # input gate closed
    c_prev = r.normal(size=(1, 3, 3, f))
    h_prev = np.zeros_like(c_prev)
    _, c, _ = L.convlstm2d_step(r.normal(size=(1, 3, 3, 1)), h_prev, c_prev,
                                np.zeros((3, 3, 1, 4 * f)), np.zeros((3, 3, f, 4 * f)), b)
    assert np.max(np.abs(c - c_prev)) < 1e-9


def test_convlstm_forward_single_step_and_zero_weights():
    r = np.random.default_rng(1)
    k, rk, b = _lstm_params(r, 2, 3)
    x = r.normal(size=(2, 1, 5, 5, 2))
    hs, _ = L.convlstm2d_forward(x, k, rk, b)
    z = np.zeros((2, 5, 5, 3))
    h, _, _ = L.convlstm2d_step(x[:, 0], z, z, k, rk, b)
    np.testing.assert_allclose(hs[:, 0], h, atol=1e-14)
    hs0, _ = L.convlstm2d_forward(r.normal(size=(2, 4, 5, 5, 2)), 0 * k, 0 * rk, 0 * b)
    assert not hs0.any()


@pytest.mark.parametrize("seed", range(5))
def test_convlstm_forward_matches_unrolled_steps(seed):
    r = np.random.default_rng(seed)
    k, rk, b = _lstm_params(r, 2, 3)
    x = r.normal(size=(2, 3, 4, 5, 2))
    hs, _ = L.convlstm2d_forward(x, k, rk, b)
    h = c = np.zeros((2, 4, 5, 3))
    for t in range(3):
        # unrolled oracle with explicit gate algebra on direct-loop convolutions
        zt = conv_oracle(x[:, t], k, b, "same") + conv_oracle(h, rk, np.zeros(12), "same")
        i, fg = 1 / (1 + np.exp(-zt[..., :3])), 1 / (1 + np.exp(-zt[..., 3:6]))
        g, o = np.tanh(zt[..., 6:9]), 1 / (1 + np.exp(-zt[..., 9:]))
        c = fg * c + i * g
        h = o * np.tanh(c)
        assert np.max(np.abs(hs[:, t] - h)) < 1e-12


def test_convlstm_state_shape_error():
    with pytest.raises(DimensionError):
        L.convlstm2d_step(np.zeros((1, 4, 4, 1)), np.zeros((1, 3, 3, 2)), np.zeros((1, 3, 3, 2)),
                          np.zeros((3, 3, 1, 8)), np.zeros((3, 3, 2, 8)), np.zeros(8))


# ---------------------------------------------------------------- gradient checks

def _built(layer, sample_shape, seed):
    layer.build(sample_shape, make_rng(seed))
    return layer


def _spread_input(r, shape):
    """Distinct values far from relu kinks and pooling ties."""
    vals = (r.permutation(int(np.prod(shape))) + 1.0) / np.prod(shape)
    signs = r.choice([-1.0, 1.0], size=vals.shape)
    return (vals * signs + 0.05 * signs).reshape(shape)


GRAD_CASES = {
    "conv2d_relu": lambda: (L.Conv2D(3, (3, 3), "relu"), (5, 5, 2), 2, {}),
    "conv2d_linear_valid": lambda: (L.Conv2D(2, (3, 3), None, "valid"), (5, 4, 2), 2, {}),
    "dense_relu": lambda: (L.Dense(4, "relu"), (6,), 3, {}),
    "dense_softmax": lambda: (L.Dense(3, "softmax"), (5,), 3, {}),
    "batchnorm_train_4d": lambda: (L.BatchNormalization(), (3, 3, 2), 4, {"training": True}),
    "batchnorm_train_2d": lambda: (L.BatchNormalization(), (5,), 8, {"training": True}),
    "batchnorm_inference": lambda: (L.BatchNormalization(), (4,), 3, {}),
    "maxpool2d": lambda: (L.MaxPooling2D((2, 2)), (5, 4, 2), 2, {}),
    "maxpool3d": lambda: (L.MaxPooling3D((1, 2, 2)), (3, 4, 4, 2), 2, {}),
    "maxpool3d_time": lambda: (L.MaxPooling3D((2, 2, 2)), (4, 4, 4, 1), 1, {}),
    "global_avg_pool": lambda: (L.GlobalAveragePooling2D(), (3, 4, 2), 2, {}),
    "flatten": lambda: (L.Flatten(), (2, 3, 2), 2, {}),
    "dropout_off": lambda: (L.Dropout(0.2), (4, 3), 2, {}),
    "dropout_fixed_mask": lambda: (L.Dropout(0.3), (4, 3), 2, {"training": True, "dropout_seed": 7}),
    "time_distributed_dropout": lambda: (L.TimeDistributed(L.Dropout(0.2)), (3, 2, 2, 2), 2,
                                         {"training": True, "dropout_seed": 3}),
    "convlstm_full_bptt": lambda: (L.ConvLSTM2D(3, (3, 3)), (3, 4, 4, 2), 2, {}),
    "convlstm_single_step": lambda: (L.ConvLSTM2D(2, (3, 3)), (1, 3, 3, 2), 2, {}),
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("case", sorted(GRAD_CASES))
def test_layer_gradients(case, seed):
    layer, sample_shape, batch, kw = GRAD_CASES[case]()
    _built(layer, sample_shape, seed)
    r = np.random.default_rng(seed)
    for key in layer.params:
        layer.params[key] += r.normal(scale=0.1, size=layer.params[key].shape)
    if layer.state:
        layer.state["mean"][...] = r.normal(size=layer.state["mean"].shape)
        layer.state["var"][...] = r.uniform(0.5, 2.0, size=layer.state["var"].shape)
    x = _spread_input(r, (batch, *sample_shape))
    worst = check_layer_gradients(layer, x, seed=seed, **kw)
    assert max(worst.values()) < GRAD_TOL, worst


@pytest.mark.parametrize("seed", SEEDS)
def test_convlstm_step_gradients(seed):
    r = np.random.default_rng(seed)
    k, rk, b = _lstm_params(r, 2, 2)
    x, h0, c0 = r.normal(size=(2, 3, 4, 2)), r.normal(size=(2, 3, 4, 2)), r.normal(size=(2, 3, 4, 2))
    wh, wc = r.normal(size=h0.shape), r.normal(size=c0.shape)

    def loss(_):
        h, c, _ = L.convlstm2d_step(x, h0, c0, k, rk, b)
        return float(np.sum(h * wh) + np.sum(c * wc))

    _, _, cache = L.convlstm2d_step(x, h0, c0, k, rk, b)
    grads = L.convlstm2d_step_backward(cache, wh, wc)
    from harkit.tensor import numeric_gradient, relative_error
    for analytic, arr in zip(grads, (x, h0, c0, k, rk, b)):
        assert relative_error(analytic, numeric_gradient(loss, arr, 1e-5)) < GRAD_TOL


def test_softmax_crossentropy_gradient():
    from harkit.tensor import numeric_gradient, relative_error
    from harkit.train import categorical_crossentropy, one_hot_matrix
    for seed in SEEDS:
        r = np.random.default_rng(seed)
        z = r.normal(size=(4, 3))
        t = one_hot_matrix(r.integers(0, 3, size=4), 3)
        _, g = categorical_crossentropy(L.softmax_forward(z)[0], t)
        num = numeric_gradient(lambda v: categorical_crossentropy(L.softmax_forward(v)[0], t)[0], z)
        assert relative_error(g, num) < 1e-6


@pytest.mark.parametrize("case", ["conv2d_relu", "dense_relu", "convlstm_full_bptt", "maxpool2d"])
def test_zero_upstream_gives_zero_gradients(case):
    layer, sample_shape, batch, kw = GRAD_CASES[case]()
    _built(layer, sample_shape, 0)
    x = np.random.default_rng(0).normal(size=(batch, *sample_shape))
    out, cache = layer.forward(x)
    dx, grads = layer.backward(cache, np.zeros_like(out))
    assert not dx.any() and all(not g.any() for g in grads.values())


def test_layer_backward_dispatch():
    layer = _built(L.Flatten(), (2, 3), 0)
    out, cache = layer.forward(np.zeros((2, 2, 3)))
    dx, grads = L.layer_backward(layer, cache, np.ones((2, 6)))
    assert dx.shape == (2, 2, 3) and grads == {}
