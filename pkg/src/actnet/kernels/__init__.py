"""Hot kernels with a compiled backend and a pure numpy fallback.

The compiled extension is used when it imports; setting ``ACTNET_KERNELS=python``
forces the fallback. Both backends share signatures and accumulation order.
GEMMs are not here: they go straight to numpy/BLAS.
"""
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("im2col", "col2im", "maxpool2_forward", "maxpool2_backward", "poly_forward", "poly_backward", "box_sum")

BACKEND = None


def available_backends():
    return ["c", "python"] if _ckernels is not None else ["python"]


def use_backend(name):
    """Switch every kernel in this module to backend ``name`` ('c' or 'python')."""
    global BACKEND
    if name == "c":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        impl = _ckernels
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _NAMES:
        globals()["_" + fn] = getattr(impl, fn)
    BACKEND = name


_COMPILED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _c(a):
    return np.ascontiguousarray(a)


def _pick(fn, a):
    # other float widths (extended precision oracles) always use numpy
    if a.dtype in _COMPILED_DTYPES:
        return globals()["_" + fn]
    return getattr(_pykernels, fn)


def im2col(x, kh, kw, stride, pad):
    return _pick("im2col", x)(_c(x), kh, kw, stride, pad)


def col2im(cols, x_shape, kh, kw, stride, pad):
    return _pick("col2im", cols)(_c(cols), tuple(int(s) for s in x_shape), kh, kw, stride, pad)


def maxpool2_forward(x):
    return _pick("maxpool2_forward", x)(_c(x))


def maxpool2_backward(g, idx, x_shape):
    return _pick("maxpool2_backward", g)(_c(g), _c(idx), tuple(int(s) for s in x_shape))


def poly_forward(a, u):
    return _pick("poly_forward", a)(_c(a), _c(u))


def poly_backward(g, a, u):
    return _pick("poly_backward", g)(_c(g), _c(a), _c(u))


def box_sum(x, radius):
    return _pick("box_sum", x)(_c(x), radius)


_requested = os.environ.get("ACTNET_KERNELS", "").strip().lower()
if _requested == "python" or _ckernels is None:
    use_backend("python")
else:
    use_backend("c")
