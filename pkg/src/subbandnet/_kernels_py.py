"""Pure-numpy reference kernels.

Same signatures and bitwise-identical results as the compiled ``_kernels``
extension. ``col2im`` accumulates kernel offsets in row-major (ki, kj)
order; the compiled version follows the same order per output element.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k):
    """(N, C, H, W) -> (N*OH*OW, C*k*k) patch matrix, valid padding, stride 1."""
    n, c, h, w = x.shape
    oh, ow = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * oh * ow, c * k * k)


def col2im(cols, x_shape, k):
    n, c, h, w = x_shape
    oh, ow = h - k + 1, w - k + 1
    cols6 = cols.reshape(n, oh, ow, c, k, k)
    dx = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + oh, j:j + ow] += cols6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx


def maxpool_forward(x):
    """2x2/stride-2 max pool with ceil semantics on odd axes.

    Returns ``(out, arg)`` where ``arg`` (int8) is the flat index 0..3 of the
    winning element inside each window; ties go to the first one.
    """
    n, c, h, w = x.shape
    oh, ow = (h + 1) // 2, (w + 1) // 2
    if h % 2 or w % 2:
        xp = np.full((n, c, 2 * oh, 2 * ow), -np.inf, dtype=x.dtype)
        xp[:, :, :h, :w] = x
    else:
        xp = x
    win = xp.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int8)


def maxpool_backward(dy, arg, x_shape):
    n, c, h, w = x_shape
    oh, ow = dy.shape[2], dy.shape[3]
    dwin = np.zeros((n, c, oh, ow, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, arg[..., None].astype(np.intp), dy[..., None], axis=-1)
    dxp = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    return np.ascontiguousarray(dxp[:, :, :h, :w])
