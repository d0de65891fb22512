"""Hot-loop kernel dispatch.

The compiled Cython extension is used when it imported cleanly, otherwise
the numpy fallback. Both produce bitwise-identical outputs, so switching
backends never changes a training trajectory.
"""
import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _compiled if _compiled is not None else _kernels_py


def available_backends():
    return sorted(_BACKENDS)


def backend():
    """Name of the active backend."""
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")
    _active = _BACKENDS[name]


def im2col(x, k):
    return _active.im2col(np.ascontiguousarray(x), k)


def col2im(cols, x_shape, k):
    return _active.col2im(np.ascontiguousarray(cols), tuple(x_shape), k)


def maxpool_forward(x):
    return _active.maxpool_forward(np.ascontiguousarray(x))


def maxpool_backward(dy, arg, x_shape):
    return _active.maxpool_backward(np.ascontiguousarray(dy), np.ascontiguousarray(arg), tuple(x_shape))
