"""Pure-numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` extension; used
when the extension is not built or ``HARKIT_PURE_PYTHON=1`` is set.
All arrays are float64, C-contiguous, channels-last.
"""
import numpy as np


def im2col(xp, kh, kw, out_h, out_w):
    """Gather ``[N, out_h, out_w, kh, kw, C]`` patches of padded input ``xp``
    into a ``[N*out_h*out_w, kh*kw*C]`` matrix."""
    n, _, _, c = xp.shape
    cols = np.empty((n, out_h, out_w, kh, kw, c), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + out_h, j:j + out_w, :]
    return cols.reshape(n * out_h * out_w, kh * kw * c)


def col2im(dcols, xp_shape, kh, kw, out_h, out_w):
    n, hp, wp, c = xp_shape
    d = dcols.reshape(n, out_h, out_w, kh, kw, c)
    dxp = np.zeros((n, hp, wp, c), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + out_h, j:j + out_w, :] += d[:, :, :, i, j, :]
    return dxp


def maxpool_forward(x, ph, pw):
    """Max over non-overlapping ``ph x pw`` windows of ``[B, H, W, C]``.

    ``H`` and ``W`` must already be multiples of the pool size. Returns the
    pooled array and, per output element, the row-major offset of the first
    maximal element inside its window.
    """
    b, h, w, c = x.shape
    oh, ow = h // ph, w // pw
    win = x.reshape(b, oh, ph, ow, pw, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, oh, ow, c, ph * pw)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(dout, arg, ph, pw):
    b, oh, ow, c = dout.shape
    dwin = np.zeros((b, oh, ow, c, ph * pw), dtype=np.float64)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(b, oh, ow, c, ph, pw).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(dx.reshape(b, oh * ph, ow * pw, c))


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_gates_forward(z, c_prev):
    """Apply the LSTM gate nonlinearities to pre-activations ``z`` whose
    last axis is ``[i | f | g | o]`` (each of width F).

    Returns ``(act, c, tanh_c, h)`` where ``act`` holds the activated gates
    in the same layout.
    """
    f = c_prev.shape[-1]
    act = np.empty_like(z)
    act[..., :2 * f] = _sigmoid(z[..., :2 * f])
    act[..., 2 * f:3 * f] = np.tanh(z[..., 2 * f:3 * f])
    act[..., 3 * f:] = _sigmoid(z[..., 3 * f:])
    i, fg, g, o = act[..., :f], act[..., f:2 * f], act[..., 2 * f:3 * f], act[..., 3 * f:]
    c = fg * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return act, c, tanh_c, h


def lstm_gates_backward(act, c_prev, tanh_c, dh, dc):
    """Backward of :func:`lstm_gates_forward`.

    ``dc`` is the gradient flowing into ``c`` from the next time step.
    Returns ``(dz, dc_prev)``.
    """
    f = c_prev.shape[-1]
    i, fg, g, o = act[..., :f], act[..., f:2 * f], act[..., 2 * f:3 * f], act[..., 3 * f:]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(act)
    dz[..., :f] = dc_total * g * i * (1.0 - i)
    dz[..., f:2 * f] = dc_total * c_prev * fg * (1.0 - fg)
    dz[..., 2 * f:3 * f] = dc_total * i * (1.0 - g * g)
    dz[..., 3 * f:] = dh * tanh_c * o * (1.0 - o)
    return dz, dc_total * fg
