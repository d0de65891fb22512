# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled conv/pool kernels. Mirrors ``_kernels_py`` bit for bit."""
import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def im2col(floating[:, :, :, ::1] x, int k):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h - k + 1, ow = w - k + 1
    cdef Py_ssize_t b, ch, i, j, y, xx, row, col
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((n * oh * ow, c * k * k), dtype=dtype)
    cdef floating[:, ::1] cols = out
    with nogil:
        for b in range(n):
            for y in range(oh):
                for xx in range(ow):
                    row = (b * oh + y) * ow + xx
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            for j in range(k):
                                cols[row, col] = x[b, ch, y + i, xx + j]
                                col = col + 1
    return out


def col2im(floating[:, ::1] cols, tuple x_shape, int k):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = h - k + 1, ow = w - k + 1
    cdef Py_ssize_t kk = k * k, ck = c * k * k
    cdef Py_ssize_t b, ch, i, j, y, xx, base
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        for y in range(oh):
                            base = (b * oh + y) * ow
                            for xx in range(ow):
                                dx[b, ch, y + i, xx + j] += cols[base + xx, ch * kk + i * k + j]
    return out


def maxpool_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 1) // 2, ow = (w + 1) // 2
    cdef Py_ssize_t b, ch, y, xx, di, dj, r, s
    cdef floating best, v
    cdef signed char a, bi
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef signed char[:, :, :, ::1] arg = arg_arr
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(oh):
                    for xx in range(ow):
                        r = 2 * y
                        s = 2 * xx
                        best = x[b, ch, r, s]
                        bi = 0
                        for di in range(2):
                            for dj in range(2):
                                if (di == 0 and dj == 0) or r + di >= h or s + dj >= w:
                                    continue
                                v = x[b, ch, r + di, s + dj]
                                if v > best:
                                    best = v
                                    bi = <signed char>(2 * di + dj)
                        out[b, ch, y, xx] = best
                        arg[b, ch, y, xx] = bi
    return out_arr, arg_arr


def maxpool_backward(floating[:, :, :, ::1] dy, signed char[:, :, :, ::1] arg, tuple x_shape):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = dy.shape[2], ow = dy.shape[3]
    cdef Py_ssize_t b, ch, y, xx
    cdef signed char a
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(oh):
                    for xx in range(ow):
                        a = arg[b, ch, y, xx]
                        dx[b, ch, 2 * y + a // 2, 2 * xx + a % 2] = dy[b, ch, y, xx]
    return out
