"""Forward and backward passes for every layer kind the two models use.

Layout is channels-last throughout: images are ``[N, H, W, C]`` and
sequences ``[N, T, H, W, C]``. Each functional ``*_forward`` returns
``(out, cache)`` and the matching ``*_backward`` takes that cache plus the
upstream gradient. The :class:`Layer` subclasses at the bottom wrap these
functions with parameters and hyperparameters so a model can be assembled
as a plain list of layers.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError, ParameterError
from .tensor import DTYPE, Rng, glorot_uniform

# Max bytes of im2col scratch per chunk; bounds memory for 64-filter convs.
_IM2COL_BUDGET = 48 * 2**20

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


# ---------------------------------------------------------------- activations

def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(cache, dout):
    return dout * (cache > 0)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def softmax_forward(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=-1, keepdims=True)
    return p, p


def softmax_backward(cache, dout):
    p = cache
    return p * (dout - np.sum(dout * p, axis=-1, keepdims=True))


def _act_forward(name, z):
    if name is None or name == "linear":
        return z, None
    if name == "relu":
        return relu_forward(z)
    if name == "softmax":
        return softmax_forward(z)
    if name == "tanh":
        t = np.tanh(z)
        return t, t
    raise ParameterError(f"unknown activation {name!r}")


def _act_backward(name, cache, dout):
    if name is None or name == "linear":
        return dout
    if name == "relu":
        return relu_backward(cache, dout)
    if name == "softmax":
        return softmax_backward(cache, dout)
    if name == "tanh":
        return dout * (1.0 - cache * cache)
    raise ParameterError(f"unknown activation {name!r}")


# ---------------------------------------------------------------- convolution

def _same_pads(k):
    return (k - 1) // 2, k // 2


def conv2d_forward(x, kernel, bias=None, padding="same"):
    """Stride-1 cross-correlation of ``[N, H, W, C]`` with ``[kh, kw, C, F]``."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {list(x.shape)} and {list(kernel.shape)}")
    n, h, w, c = x.shape
    kh, kw, kc, nf = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d: input has {c} channels but kernel {list(kernel.shape)} expects {kc}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise DimensionError(f"same padding needs odd kernel dims, got {kh}x{kw}")
        (pt, pb), (pl, pr) = _same_pads(kh), _same_pads(kw)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if kh > 1 or kw > 1 else np.ascontiguousarray(x)
        oh, ow = h, w
    elif padding == "valid":
        oh, ow = h - kh + 1, w - kw + 1
        if oh <= 0 or ow <= 0:
            raise DimensionError(f"valid conv of {list(x.shape)} with {kh}x{kw} kernel has empty output")
        xp = np.ascontiguousarray(x)
    else:
        raise ParameterError(f"unknown padding {padding!r}")

    k2 = kernel.reshape(kh * kw * c, nf)
    out = np.empty((n, oh, ow, nf), dtype=DTYPE)
    step = _chunk(n, oh * ow * kh * kw * c)
    for s in range(0, n, step):
        cols = kernels.im2col(xp[s:s + step], kh, kw, oh, ow)
        out[s:s + step] = (cols @ k2).reshape(-1, oh, ow, nf)
    if bias is not None:
        out += bias
    cache = (xp, kernel, x.shape, padding, bias is not None)
    return out, cache


def conv2d_backward(cache, dout, need_dx=True):
    xp, kernel, x_shape, padding, has_bias = cache
    n, h, w, c = x_shape
    kh, kw, _, nf = kernel.shape
    oh, ow = dout.shape[1], dout.shape[2]
    k2 = kernel.reshape(kh * kw * c, nf)
    dk = np.zeros_like(k2)
    dxp = np.empty(xp.shape, dtype=DTYPE) if need_dx else None
    step = _chunk(n, oh * ow * kh * kw * c)
    for s in range(0, n, step):
        xs = xp[s:s + step]
        cols = kernels.im2col(xs, kh, kw, oh, ow)
        d2 = dout[s:s + step].reshape(-1, nf)
        dk += cols.T @ d2
        if need_dx:
            dxp[s:s + step] = kernels.col2im(np.ascontiguousarray(d2 @ k2.T), xs.shape, kh, kw, oh, ow)
    db = dout.sum(axis=(0, 1, 2)) if has_bias else None
    dx = None
    if need_dx:
        if padding == "same":
            (pt, _), (pl, _) = _same_pads(kh), _same_pads(kw)
            dx = np.ascontiguousarray(dxp[:, pt:pt + h, pl:pl + w, :])
        else:
            dx = dxp
    return dx, dk.reshape(kernel.shape), db


def _chunk(n, row_elems):
    per_sample = row_elems * 8
    return max(1, min(n, _IM2COL_BUDGET // max(per_sample, 1)))


# ---------------------------------------------------------------- pooling

def maxpool_forward(x, pool, layout="2D"):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a
    window are dropped."""
    if layout == "2D":
        if x.ndim != 4 or len(pool) != 2:
            raise DimensionError(f"2D max pool expects [N,H,W,C] and a 2-tuple pool, got {list(x.shape)}, {pool}")
        ph, pw = pool
        n, h, w, c = x.shape
        if ph > h or pw > w:
            raise DimensionError(f"pool {tuple(pool)} larger than spatial dims {(h, w)}")
        oh, ow = h // ph, w // pw
        xt = np.ascontiguousarray(x[:, :oh * ph, :ow * pw, :])
        out, arg = kernels.maxpool_forward(xt, ph, pw)
        return out, (arg, x.shape, (ph, pw), layout)
    if layout == "3D":
        if x.ndim != 5 or len(pool) != 3:
            raise DimensionError(f"3D max pool expects [N,T,H,W,C] and a 3-tuple pool, got {list(x.shape)}, {pool}")
        pt, ph, pw = pool
        n, t, h, w, c = x.shape
        if pt > t or ph > h or pw > w:
            raise DimensionError(f"pool {tuple(pool)} larger than dims {(t, h, w)}")
        if pt == 1:
            out, (arg, _, _, _) = maxpool_forward(x.reshape(n * t, h, w, c), (ph, pw))
            return out.reshape(n, t, *out.shape[1:]), (arg, x.shape, tuple(pool), layout)
        ot, oh, ow = t // pt, h // ph, w // pw
        win = x[:, :ot * pt, :oh * ph, :ow * pw, :].reshape(n, ot, pt, oh, ph, ow, pw, c)
        win = win.transpose(0, 1, 3, 5, 7, 2, 4, 6).reshape(n, ot, oh, ow, c, pt * ph * pw)
        arg = np.argmax(win, axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return np.ascontiguousarray(out), (arg, x.shape, tuple(pool), layout)
    raise ParameterError(f"unknown pooling layout {layout!r}")


def maxpool_backward(cache, dout):
    arg, x_shape, pool, layout = cache
    if layout == "2D":
        ph, pw = pool
        d = kernels.maxpool_backward(np.ascontiguousarray(dout), arg, ph, pw)
        if d.shape != tuple(x_shape):
            full = np.zeros(x_shape, dtype=DTYPE)
            full[:, :d.shape[1], :d.shape[2], :] = d
            d = full
        return d
    pt, ph, pw = pool
    n, t, h, w, c = x_shape
    if pt == 1:
        d = maxpool_backward((arg, (n * t, h, w, c), (ph, pw), "2D"), dout.reshape(n * t, *dout.shape[2:]))
        return d.reshape(x_shape)
    _, ot, oh, ow, _ = dout.shape
    dwin = np.zeros((n, ot, oh, ow, c, pt * ph * pw), dtype=DTYPE)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    d = dwin.reshape(n, ot, oh, ow, c, pt, ph, pw).transpose(0, 1, 5, 2, 6, 3, 7, 4)
    full = np.zeros(x_shape, dtype=DTYPE)
    full[:, :ot * pt, :oh * ph, :ow * pw, :] = d.reshape(n, ot * pt, oh * ph, ow * pw, c)
    return full


def global_avg_pool_forward(x):
    if x.ndim != 4:
        raise DimensionError(f"global average pool expects [N,H,W,F], got {list(x.shape)}")
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(cache, dout):
    n, h, w, f = cache
    return np.broadcast_to(dout[:, None, None, :] / (h * w), cache).copy()


# ---------------------------------------------------------------- dense / reshape

def dense_forward(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise DimensionError(f"dense: input {list(x.shape)} incompatible with weights {list(weights.shape)}")
    return x @ weights + bias, x


def dense_backward(cache, dout, weights):
    x = cache
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def flatten_forward(x):
    if x.ndim < 2:
        raise DimensionError(f"flatten needs rank >= 2, got {list(x.shape)}")
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(cache, dout):
    return dout.reshape(cache)


# ---------------------------------------------------------------- normalization

def batchnorm_forward(x, gamma, beta, state, mode="training", eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel (last axis) batch normalization.

    ``state`` is a dict with ``"mean"`` and ``"var"`` arrays; it is updated
    in place only in training mode.
    """
    if eps <= 0:
        raise ParameterError(f"batchnorm eps must be positive, got {eps}")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(f"batchnorm: gamma/beta {list(gamma.shape)} do not match channels {x.shape[-1]}")
    axes = tuple(range(x.ndim - 1))
    if mode == "training":
        mu = x.mean(axis=axes)
        xc = x - mu
        var = np.mean(xc * xc, axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        state["mean"][...] = momentum * state["mean"] + (1.0 - momentum) * mu
        state["var"][...] = momentum * state["var"] + (1.0 - momentum) * var
        return gamma * xhat + beta, (mode, xhat, inv, gamma)
    if mode == "inference":
        inv = 1.0 / np.sqrt(state["var"] + eps)
        xhat = (x - state["mean"]) * inv
        return gamma * xhat + beta, (mode, xhat, inv, gamma)
    raise ParameterError(f"unknown mode {mode!r}")


def batchnorm_backward(cache, dout):
    mode, xhat, inv, gamma = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = np.sum(dout * xhat, axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if mode == "inference":
        return dxhat * inv, dgamma, dbeta
    m = dout.size // dout.shape[-1]
    dx = (inv / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * np.sum(dxhat * xhat, axis=axes))
    return dx, dgamma, dbeta


# ---------------------------------------------------------------- dropout

def dropout_forward(x, rate, rng: Rng | None = None, mode="training"):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "inference" or rate == 0.0:
        return x, None
    if rng is None:
        raise ParameterError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(cache, dout):
    return dout if cache is None else dout * cache


# ---------------------------------------------------------------- time distribution

def time_distributed_apply(inner, x):
    """Apply ``inner`` to each ``x[:, t]`` and restack along axis 1."""
    if x.ndim < 3:
        raise DimensionError(f"time-distributed input needs [N,T,...], got {list(x.shape)}")
    outs = []
    for t in range(x.shape[1]):
        try:
            outs.append(inner(x[:, t]))
        except DimensionError as exc:
            raise DimensionError(f"time step {t}: {exc}") from exc
    return np.stack(outs, axis=1)


# ---------------------------------------------------------------- ConvLSTM

def convlstm2d_step(x_t, h_prev, c_prev, kernel, recurrent_kernel, bias):
    """One convolutional LSTM step with same padding.

    ``kernel`` is ``[kh, kw, Cin, 4F]`` and ``recurrent_kernel``
    ``[kh, kw, F, 4F]``; the gate axis is ordered input, forget, candidate,
    output. Returns ``(h_t, c_t, cache)``.
    """
    if h_prev.shape[:3] != x_t.shape[:3] or c_prev.shape != h_prev.shape:
        raise DimensionError(
            f"convlstm step: state {list(h_prev.shape)}/{list(c_prev.shape)} incompatible with input {list(x_t.shape)}"
        )
    zx, xcache = conv2d_forward(x_t, kernel, bias)
    zh, hcache = conv2d_forward(h_prev, recurrent_kernel)
    act, c, tanh_c, h = kernels.lstm_gates_forward(zx + zh, c_prev)
    return h, c, (xcache, hcache, act, c_prev, tanh_c)


def convlstm2d_step_backward(cache, dh, dc):
    """Returns ``(dx_t, dh_prev, dc_prev, dkernel, drecurrent, dbias)``."""
    xcache, hcache, act, c_prev, tanh_c = cache
    dz, dc_prev = kernels.lstm_gates_backward(act, c_prev, tanh_c, dh, dc)
    dx, dk, db = conv2d_backward(xcache, dz)
    dh_prev, drk, _ = conv2d_backward(hcache, dz)
    return dx, dh_prev, dc_prev, dk, drk, db


def convlstm2d_forward(x, kernel, recurrent_kernel, bias):
    """Run the cell over ``x[:, t]`` for all t from zero state; returns the
    full hidden sequence ``[N, T, H, W, F]``."""
    if x.ndim != 5:
        raise DimensionError(f"convlstm expects [N,T,H,W,C], got {list(x.shape)}")
    n, t_len, h, w, cin = x.shape
    nf = recurrent_kernel.shape[2]
    if kernel.shape[2] != cin:
        raise DimensionError(f"convlstm: input has {cin} channels, kernel {list(kernel.shape)} expects {kernel.shape[2]}")
    # input-to-state convolutions for all steps at once
    zx, xcache = conv2d_forward(x.reshape(n * t_len, h, w, cin), kernel, bias)
    zx = zx.reshape(n, t_len, h, w, 4 * nf)
    hs = np.empty((n, t_len, h, w, nf), dtype=DTYPE)
    hprev = np.zeros((n, h, w, nf), dtype=DTYPE)
    cprev = np.zeros((n, h, w, nf), dtype=DTYPE)
    steps = []
    for t in range(t_len):
        if t == 0:
            z, hcache = zx[:, 0], None
        else:
            zh, hcache = conv2d_forward(hprev, recurrent_kernel)
            z = zx[:, t] + zh
        act, c, tanh_c, hcur = kernels.lstm_gates_forward(z, cprev)
        steps.append((hcache, act, cprev, tanh_c))
        hs[:, t] = hcur
        hprev, cprev = hcur, c
    return hs, (xcache, steps, x.shape, recurrent_kernel)


def convlstm2d_backward(cache, dout, need_dx=True):
    """Backpropagation through time. Returns ``(dx, dkernel, drecurrent, dbias)``."""
    xcache, steps, x_shape, recurrent_kernel = cache
    n, t_len, h, w, cin = x_shape
    nf = recurrent_kernel.shape[2]
    dzx = np.empty((n, t_len, h, w, 4 * nf), dtype=DTYPE)
    drk = np.zeros_like(recurrent_kernel)
    dh_next = np.zeros((n, h, w, nf), dtype=DTYPE)
    dc_next = np.zeros((n, h, w, nf), dtype=DTYPE)
    for t in range(t_len - 1, -1, -1):
        hcache, act, cprev, tanh_c = steps[t]
        dz, dc_next = kernels.lstm_gates_backward(act, cprev, tanh_c, dout[:, t] + dh_next, dc_next)
        dzx[:, t] = dz
        if hcache is not None:
            dh_next, dk_t, _ = conv2d_backward(hcache, dz)
            drk += dk_t
    dx, dk, db = conv2d_backward(xcache, dzx.reshape(n * t_len, h, w, 4 * nf), need_dx)
    return (dx.reshape(x_shape) if need_dx else None), dk, drk, db


# ================================================================ layer nodes

class Layer:
    """A node of a sequential model.

    ``params`` holds trainable arrays, ``state`` non-trainable ones
    (batch-norm running statistics). ``build`` infers parameter shapes from
    the per-sample input shape and returns the per-sample output shape.
    """

    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.input_shape: tuple | None = None
        self.output_shape: tuple | None = None
        # cleared on a model's first layer, whose input gradient is never used
        self.input_grad = True

    def config(self) -> dict:
        return {}

    def build(self, input_shape, rng: Rng | None = None):
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(self.compute_output_shape(self.input_shape))
        if rng is not None:
            self.init_params(self.input_shape, rng)
        else:
            self.params = {k: np.zeros(v, dtype=DTYPE) for k, v in self.param_shapes().items()}
            self.state = {k: np.zeros(v, dtype=DTYPE) for k, v in self.state_shapes().items()}
        return self.output_shape

    def compute_output_shape(self, input_shape):
        return input_shape

    def init_params(self, input_shape, rng):
        pass

    def param_shapes(self) -> dict[str, tuple]:
        return {}

    def state_shapes(self) -> dict[str, tuple]:
        return {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, cache, dout):
        """Returns ``(dx, grads)`` with ``grads`` keyed like ``params``."""
        raise NotImplementedError

    def count_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values()) + \
            sum(int(np.prod(s)) for s in self.state_shapes().values())

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, filters, kernel_size=(3, 3), activation="relu", padding="same"):
        super().__init__()
        self.filters = int(filters)
        self.kernel_size = tuple(kernel_size)
        self.activation = activation
        self.padding = padding

    def config(self):
        return {"filters": self.filters, "kernel_size": list(self.kernel_size),
                "activation": self.activation, "padding": self.padding}

    def compute_output_shape(self, s):
        if len(s) != 3:
            raise DimensionError(f"Conv2D expects [H,W,C] samples, got {list(s)}")
        kh, kw = self.kernel_size
        if self.padding == "same":
            return (s[0], s[1], self.filters)
        if s[0] - kh + 1 <= 0 or s[1] - kw + 1 <= 0:
            raise DimensionError(f"valid Conv2D on {list(s)} with {kh}x{kw} kernel has empty output")
        return (s[0] - kh + 1, s[1] - kw + 1, self.filters)

    def param_shapes(self):
        kh, kw = self.kernel_size
        return {"kernel": (kh, kw, self.input_shape[2], self.filters), "bias": (self.filters,)}

    def init_params(self, s, rng):
        kh, kw = self.kernel_size
        self.params = {
            "kernel": glorot_uniform((kh, kw, s[2], self.filters), kh * kw * s[2], kh * kw * self.filters, rng),
            "bias": np.zeros(self.filters, dtype=DTYPE),
        }

    def forward(self, x, training=False, rng=None):
        z, ccache = conv2d_forward(x, self.params["kernel"], self.params["bias"], self.padding)
        out, acache = _act_forward(self.activation, z)
        return out, (ccache, acache)

    def backward(self, cache, dout):
        ccache, acache = cache
        dz = _act_backward(self.activation, acache, dout)
        dx, dk, db = conv2d_backward(ccache, dz, need_dx=self.input_grad)
        return dx, {"kernel": dk, "bias": db}


class Dense(Layer):
    kind = "dense"

    def __init__(self, units, activation=None):
        super().__init__()
        self.units = int(units)
        self.activation = activation

    def config(self):
        return {"units": self.units, "activation": self.activation}

    def compute_output_shape(self, s):
        if len(s) != 1:
            raise DimensionError(f"Dense expects flat [D] samples, got {list(s)}")
        return (self.units,)

    def param_shapes(self):
        return {"kernel": (self.input_shape[0], self.units), "bias": (self.units,)}

    def init_params(self, s, rng):
        self.params = {
            "kernel": glorot_uniform((s[0], self.units), s[0], self.units, rng),
            "bias": np.zeros(self.units, dtype=DTYPE),
        }

    def forward(self, x, training=False, rng=None):
        z, dcache = dense_forward(x, self.params["kernel"], self.params["bias"])
        out, acache = _act_forward(self.activation, z)
        return out, (dcache, acache)

    def backward(self, cache, dout, skip_activation=False):
        dcache, acache = cache
        dz = dout if skip_activation else _act_backward(self.activation, acache, dout)
        dx, dk, db = dense_backward(dcache, dz, self.params["kernel"])
        return dx, {"kernel": dk, "bias": db}


class BatchNormalization(Layer):
    kind = "batchnorm"

    def __init__(self, momentum=BN_MOMENTUM, epsilon=BN_EPS):
        super().__init__()
        self.momentum = momentum
        self.epsilon = epsilon

    def config(self):
        return {"momentum": self.momentum, "epsilon": self.epsilon}

    def param_shapes(self):
        return {"gamma": (self.input_shape[-1],), "beta": (self.input_shape[-1],)}

    def state_shapes(self):
        return {"mean": (self.input_shape[-1],), "var": (self.input_shape[-1],)}

    def init_params(self, s, rng):
        c = s[-1]
        self.params = {"gamma": np.ones(c, dtype=DTYPE), "beta": np.zeros(c, dtype=DTYPE)}
        self.state = {"mean": np.zeros(c, dtype=DTYPE), "var": np.ones(c, dtype=DTYPE)}

    def forward(self, x, training=False, rng=None):
        return batchnorm_forward(x, self.params["gamma"], self.params["beta"], self.state,
                                 "training" if training else "inference", self.epsilon, self.momentum)

    def backward(self, cache, dout):
        dx, dg, db = batchnorm_backward(cache, dout)
        return dx, {"gamma": dg, "beta": db}


class MaxPooling2D(Layer):
    kind = "maxpool2d"

    def __init__(self, pool_size=(2, 2)):
        super().__init__()
        self.pool_size = tuple(pool_size)

    def config(self):
        return {"pool_size": list(self.pool_size)}

    def compute_output_shape(self, s):
        ph, pw = self.pool_size
        if len(s) != 3 or ph > s[0] or pw > s[1]:
            raise DimensionError(f"MaxPooling2D{self.pool_size} cannot pool sample shape {list(s)}")
        return (s[0] // ph, s[1] // pw, s[2])

    def forward(self, x, training=False, rng=None):
        return maxpool_forward(x, self.pool_size, "2D")

    def backward(self, cache, dout):
        return maxpool_backward(cache, dout), {}


class MaxPooling3D(Layer):
    kind = "maxpool3d"

    def __init__(self, pool_size=(1, 2, 2)):
        super().__init__()
        self.pool_size = tuple(pool_size)

    def config(self):
        return {"pool_size": list(self.pool_size)}

    def compute_output_shape(self, s):
        pt, ph, pw = self.pool_size
        if len(s) != 4 or pt > s[0] or ph > s[1] or pw > s[2]:
            raise DimensionError(f"MaxPooling3D{self.pool_size} cannot pool sample shape {list(s)}")
        return (s[0] // pt, s[1] // ph, s[2] // pw, s[3])

    def forward(self, x, training=False, rng=None):
        return maxpool_forward(x, self.pool_size, "3D")

    def backward(self, cache, dout):
        return maxpool_backward(cache, dout), {}


class GlobalAveragePooling2D(Layer):
    kind = "global_avg_pool2d"

    def compute_output_shape(self, s):
        if len(s) != 3:
            raise DimensionError(f"GlobalAveragePooling2D expects [H,W,F] samples, got {list(s)}")
        return (s[2],)

    def forward(self, x, training=False, rng=None):
        return global_avg_pool_forward(x)

    def backward(self, cache, dout):
        return global_avg_pool_backward(cache, dout), {}


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, s):
        return (int(np.prod(s)),)

    def forward(self, x, training=False, rng=None):
        return flatten_forward(x)

    def backward(self, cache, dout):
        return flatten_backward(cache, dout), {}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False, rng=None):
        return dropout_forward(x, self.rate, rng, "training" if training else "inference")

    def backward(self, cache, dout):
        return dropout_backward(cache, dout), {}


class TimeDistributed(Layer):
    """Applies a parameter-free inner layer to every time slice of
    ``[N, T, ...]`` by folding time into the batch axis."""

    kind = "time_distributed"

    def __init__(self, inner: Layer):
        super().__init__()
        self.inner = inner

    def config(self):
        return {"inner": self.inner.kind, **self.inner.config()}

    def compute_output_shape(self, s):
        if len(s) < 2:
            raise DimensionError(f"TimeDistributed expects [T,...] samples, got {list(s)}")
        return (s[0], *self.inner.build(s[1:]))

    def forward(self, x, training=False, rng=None):
        n, t = x.shape[:2]
        out, cache = self.inner.forward(x.reshape(n * t, *x.shape[2:]), training, rng)
        return out.reshape(n, t, *out.shape[1:]), (cache, x.shape)

    def backward(self, cache, dout):
        icache, x_shape = cache
        n, t = x_shape[:2]
        dx, grads = self.inner.backward(icache, dout.reshape(n * t, *dout.shape[2:]))
        return dx.reshape(x_shape), grads


class ConvLSTM2D(Layer):
    kind = "convlstm2d"

    def __init__(self, filters, kernel_size=(3, 3), activation="tanh", return_sequences=True,
                 unit_forget_bias=True):
        super().__init__()
        if activation != "tanh":
            raise ParameterError("ConvLSTM2D supports only the tanh activation")
        if not return_sequences:
            raise ParameterError("ConvLSTM2D always returns the full sequence")
        self.filters = int(filters)
        self.kernel_size = tuple(kernel_size)
        self.activation = activation
        self.return_sequences = True
        self.unit_forget_bias = unit_forget_bias

    def config(self):
        return {"filters": self.filters, "kernel_size": list(self.kernel_size),
                "activation": self.activation, "padding": "same",
                "recurrent_activation": "sigmoid", "return_sequences": True}

    def compute_output_shape(self, s):
        if len(s) != 4:
            raise DimensionError(f"ConvLSTM2D expects [T,H,W,C] samples, got {list(s)}")
        return (s[0], s[1], s[2], self.filters)

    def param_shapes(self):
        kh, kw = self.kernel_size
        f = self.filters
        return {"kernel": (kh, kw, self.input_shape[3], 4 * f),
                "recurrent_kernel": (kh, kw, f, 4 * f), "bias": (4 * f,)}

    def init_params(self, s, rng):
        kh, kw = self.kernel_size
        f, cin = self.filters, s[3]
        bias = np.zeros(4 * f, dtype=DTYPE)
        if self.unit_forget_bias:
            bias[f:2 * f] = 1.0
        self.params = {
            "kernel": glorot_uniform((kh, kw, cin, 4 * f), kh * kw * cin, kh * kw * 4 * f, rng),
            "recurrent_kernel": glorot_uniform((kh, kw, f, 4 * f), kh * kw * f, kh * kw * 4 * f, rng),
            "bias": bias,
        }

    def forward(self, x, training=False, rng=None):
        return convlstm2d_forward(x, self.params["kernel"], self.params["recurrent_kernel"], self.params["bias"])

    def backward(self, cache, dout):
        dx, dk, drk, db = convlstm2d_backward(cache, dout, self.input_grad)
        return dx, {"kernel": dk, "recurrent_kernel": drk, "bias": db}


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, Dense, BatchNormalization, MaxPooling2D, MaxPooling3D,
                                         GlobalAveragePooling2D, Flatten, Dropout, TimeDistributed,
                                         ConvLSTM2D)}


def layer_from_config(kind: str, cfg: dict) -> Layer:
    """Rebuild a layer node from ``(kind, config())`` as stored in checkpoints."""
    cfg = dict(cfg)
    if kind == "time_distributed":
        inner_kind = cfg.pop("inner")
        return TimeDistributed(layer_from_config(inner_kind, cfg))
    if kind == "convlstm2d":
        for key in ("padding", "recurrent_activation", "return_sequences"):
            cfg.pop(key, None)
    if kind not in LAYER_TYPES:
        raise ParameterError(f"unknown layer kind {kind!r}")
    return LAYER_TYPES[kind](**cfg)


def layer_backward(node: Layer, cache, upstream):
    return node.backward(cache, upstream)
