# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


def im2col(const double[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[3]
    cdef Py_ssize_t b, y, x, i, j, k, row, col
    out = np.empty((n * out_h * out_w, kh * kw * c), dtype=np.float64)
    cdef double[:, ::1] cols = out
    with nogil:
        row = 0
        for b in range(n):
            for y in range(out_h):
                for x in range(out_w):
                    col = 0
                    for i in range(kh):
                        for j in range(kw):
                            for k in range(c):
                                cols[row, col] = xp[b, y + i, x + j, k]
                                col = col + 1
                    row = row + 1
    return out


def col2im(const double[:, ::1] dcols, xp_shape, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t n = xp_shape[0], c = xp_shape[3]
    cdef Py_ssize_t b, y, x, i, j, k, row, col
    out = np.zeros(tuple(xp_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] dxp = out
    with nogil:
        row = 0
        for b in range(n):
            for y in range(out_h):
                for x in range(out_w):
                    col = 0
                    for i in range(kh):
                        for j in range(kw):
                            for k in range(c):
                                dxp[b, y + i, x + j, k] += dcols[row, col]
                                col = col + 1
                    row = row + 1
    return out


def maxpool_forward(const double[:, :, :, ::1] x, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t nb = x.shape[0], c = x.shape[3]
    cdef Py_ssize_t oh = x.shape[1] // ph, ow = x.shape[2] // pw
    cdef Py_ssize_t b, y, xx, k, i, j, best_idx
    cdef double best, v
    out_arr = np.empty((nb, oh, ow, c), dtype=np.float64)
    arg_arr = np.empty((nb, oh, ow, c), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    with nogil:
        for b in range(nb):
            for y in range(oh):
                for xx in range(ow):
                    for k in range(c):
                        best = x[b, y * ph, xx * pw, k]
                        best_idx = 0
                        for i in range(ph):
                            for j in range(pw):
                                v = x[b, y * ph + i, xx * pw + j, k]
                                if v > best:
                                    best = v
                                    best_idx = i * pw + j
                        out[b, y, xx, k] = best
                        arg[b, y, xx, k] = best_idx
    return out_arr, arg_arr


def maxpool_backward(const double[:, :, :, ::1] dout, const cnp.int64_t[:, :, :, ::1] arg,
                     Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t nb = dout.shape[0], oh = dout.shape[1], ow = dout.shape[2], c = dout.shape[3]
    cdef Py_ssize_t b, y, xx, k, a
    dx_arr = np.zeros((nb, oh * ph, ow * pw, c), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    with nogil:
        for b in range(nb):
            for y in range(oh):
                for xx in range(ow):
                    for k in range(c):
                        a = arg[b, y, xx, k]
                        dx[b, y * ph + a // pw, xx * pw + a % pw, k] = dout[b, y, xx, k]
    return dx_arr


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def lstm_gates_forward(z_in, c_in):
    cdef Py_ssize_t f = c_in.shape[c_in.ndim - 1]
    cdef Py_ssize_t m = c_in.size // f
    cdef const double[:, ::1] z = np.ascontiguousarray(z_in).reshape(m, 4 * f)
    cdef const double[:, ::1] cp = np.ascontiguousarray(c_in).reshape(m, f)
    act_arr = np.empty((m, 4 * f), dtype=np.float64)
    c_arr = np.empty((m, f), dtype=np.float64)
    tc_arr = np.empty((m, f), dtype=np.float64)
    h_arr = np.empty((m, f), dtype=np.float64)
    cdef double[:, ::1] act = act_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] tc = tc_arr
    cdef double[:, ::1] h = h_arr
    cdef Py_ssize_t r, k
    cdef double ig, fg, gg, og, cv, tv
    with nogil:
        for r in range(m):
            for k in range(f):
                ig = _sigmoid(z[r, k])
                fg = _sigmoid(z[r, f + k])
                gg = tanh(z[r, 2 * f + k])
                og = _sigmoid(z[r, 3 * f + k])
                act[r, k] = ig
                act[r, f + k] = fg
                act[r, 2 * f + k] = gg
                act[r, 3 * f + k] = og
                cv = fg * cp[r, k] + ig * gg
                tv = tanh(cv)
                c[r, k] = cv
                tc[r, k] = tv
                h[r, k] = og * tv
    shape = c_in.shape
    zshape = z_in.shape
    return (act_arr.reshape(zshape), c_arr.reshape(shape),
            tc_arr.reshape(shape), h_arr.reshape(shape))


def lstm_gates_backward(act_in, c_prev_in, tanh_c_in, dh_in, dc_in):
    cdef Py_ssize_t f = c_prev_in.shape[c_prev_in.ndim - 1]
    cdef Py_ssize_t m = c_prev_in.size // f
    cdef const double[:, ::1] act = np.ascontiguousarray(act_in).reshape(m, 4 * f)
    cdef const double[:, ::1] cp = np.ascontiguousarray(c_prev_in).reshape(m, f)
    cdef const double[:, ::1] tc = np.ascontiguousarray(tanh_c_in).reshape(m, f)
    cdef const double[:, ::1] dh = np.ascontiguousarray(dh_in).reshape(m, f)
    cdef const double[:, ::1] dc = np.ascontiguousarray(dc_in).reshape(m, f)
    dz_arr = np.empty((m, 4 * f), dtype=np.float64)
    dcp_arr = np.empty((m, f), dtype=np.float64)
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t r, k
    cdef double ig, fg, gg, og, t, dct
    with nogil:
        for r in range(m):
            for k in range(f):
                ig = act[r, k]
                fg = act[r, f + k]
                gg = act[r, 2 * f + k]
                og = act[r, 3 * f + k]
                t = tc[r, k]
                dct = dc[r, k] + dh[r, k] * og * (1.0 - t * t)
                dz[r, k] = dct * gg * ig * (1.0 - ig)
                dz[r, f + k] = dct * cp[r, k] * fg * (1.0 - fg)
                dz[r, 2 * f + k] = dct * ig * (1.0 - gg * gg)
                dz[r, 3 * f + k] = dh[r, k] * t * og * (1.0 - og)
                dcp[r, k] = dct * fg
    return dz_arr.reshape(act_in.shape), dcp_arr.reshape(c_prev_in.shape)
