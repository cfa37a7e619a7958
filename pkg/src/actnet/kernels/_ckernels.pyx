# Compiled twins of the kernels in _pykernels.py. Loop nests mirror the numpy
# accumulation order so both backends agree bit for bit.
import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


cdef inline void _valid_range(Py_ssize_t offset, Py_ssize_t stride, Py_ssize_t extent, Py_ssize_t n_out,
                              Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output positions o in [lo, hi) with 0 <= o * stride + offset < extent
    cdef Py_ssize_t first = 0, last
    if offset < 0:
        first = (-offset + stride - 1) // stride
    last = (extent - 1 - offset) // stride + 1 if extent - 1 - offset >= 0 else 0
    if last > n_out:
        last = n_out
    if first > last:
        first = last
    lo[0] = first
    hi[0] = last


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((c * kh * kw, n * ho * wo), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, b, oy, ox, row, iy, lo, hi, ylo, yhi
    cdef floating* dst
    cdef floating* src
    if out_arr.size == 0 or x.shape[0] == 0:
        return out_arr
    with nogil:
        for ci in range(c):
            for i in range(kh):
                _valid_range(i - pad, stride, h, ho, &ylo, &yhi)
                for j in range(kw):
                    _valid_range(j - pad, stride, w, wo, &lo, &hi)
                    row = (ci * kh + i) * kw + j
                    for b in range(n):
                        for oy in range(ylo, yhi):
                            iy = oy * stride + i - pad
                            dst = &out[row, (b * ho + oy) * wo]
                            src = &x[b, ci, iy, 0] + (j - pad)
                            if stride == 1:
                                for ox in range(lo, hi):
                                    dst[ox] = src[ox]
                            else:
                                for ox in range(lo, hi):
                                    dst[ox] = src[ox * stride]
    return out_arr


def col2im(floating[:, ::1] cols, tuple x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, b, oy, ox, row, base, iy, lo, hi, ylo, yhi
    with nogil:
        for ci in range(c):
            for i in range(kh):
                _valid_range(i - pad, stride, h, ho, &ylo, &yhi)
                for j in range(kw):
                    _valid_range(j - pad, stride, w, wo, &lo, &hi)
                    row = (ci * kh + i) * kw + j
                    for b in range(n):
                        for oy in range(ylo, yhi):
                            iy = oy * stride + i - pad
                            base = (b * ho + oy) * wo
                            for ox in range(lo, hi):
                                out[b, ci, iy, ox * stride + j - pad] += cols[row, base + ox]
    return out_arr


def maxpool2_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2] // 2, w = x.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, h, w), dtype=dtype)
    idx_arr = np.empty((n, c, h, w), dtype=np.int8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ci, oy, ox
    cdef floating best, v
    cdef cnp.int8_t arg
    for b in range(n):
        for ci in range(c):
            for oy in range(h):
                for ox in range(w):
                    best = x[b, ci, 2 * oy, 2 * ox]
                    arg = 0
                    v = x[b, ci, 2 * oy, 2 * ox + 1]
                    if v > best:
                        best = v
                        arg = 1
                    v = x[b, ci, 2 * oy + 1, 2 * ox]
                    if v > best:
                        best = v
                        arg = 2
                    v = x[b, ci, 2 * oy + 1, 2 * ox + 1]
                    if v > best:
                        best = v
                        arg = 3
                    out[b, ci, oy, ox] = best
                    idx[b, ci, oy, ox] = arg
    return out_arr, idx_arr


def maxpool2_backward(floating[:, :, :, ::1] g, cnp.int8_t[:, :, :, ::1] idx, tuple x_shape):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], h = g.shape[2], w = g.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros(x_shape, dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, oy, ox
    cdef int k
    for b in range(n):
        for ci in range(c):
            for oy in range(h):
                for ox in range(w):
                    k = idx[b, ci, oy, ox]
                    out[b, ci, 2 * oy + k // 2, 2 * ox + k % 2] = g[b, ci, oy, ox]
    return out_arr


def poly_forward(floating[:, :, :, ::1] a, floating[:, :, ::1] u):
    cdef Py_ssize_t n = a.shape[0], order = a.shape[1] - 1, c = a.shape[2], s = a.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, s), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, p, k
    cdef floating acc, uu
    for b in range(n):
        for ci in range(c):
            for p in range(s):
                uu = u[b, ci, p]
                acc = a[b, order, ci, p]
                for k in range(order - 1, -1, -1):
                    acc = acc * uu
                    acc = acc + a[b, k, ci, p]
                out[b, ci, p] = acc
    return out_arr


def poly_backward(floating[:, :, ::1] g, floating[:, :, :, ::1] a, floating[:, :, ::1] u):
    cdef Py_ssize_t n = a.shape[0], order = a.shape[1] - 1, c = a.shape[2], s = a.shape[3]
    dtype = np.float32 if floating is float else np.float64
    ga_arr = np.empty((n, order + 1, c, s), dtype=dtype)
    gu_arr = np.empty((n, c, s), dtype=dtype)
    cdef floating[:, :, :, ::1] ga = ga_arr
    cdef floating[:, :, ::1] gu = gu_arr
    cdef Py_ssize_t b, ci, p, k
    cdef floating gg, uu, pw, d
    for b in range(n):
        for ci in range(c):
            for p in range(s):
                gg = g[b, ci, p]
                uu = u[b, ci, p]
                pw = gg
                for k in range(order + 1):
                    ga[b, k, ci, p] = pw
                    pw = pw * uu
                if order == 0:
                    gu[b, ci, p] = 0
                    continue
                d = order * a[b, order, ci, p]
                for k in range(order - 1, 0, -1):
                    d = d * uu + k * a[b, k, ci, p]
                gu[b, ci, p] = gg * d
    return ga_arr, gu_arr


def box_sum(floating[:, :, :, ::1] x, int radius):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, y, xx, dy, dx, ylo, yhi, xlo, xhi
    with nogil:
        for b in range(n):
            for ci in range(c):
                for dy in range(2 * radius + 1):
                    _valid_range(dy - radius, 1, h, h, &ylo, &yhi)
                    for dx in range(2 * radius + 1):
                        _valid_range(dx - radius, 1, w, w, &xlo, &xhi)
                        for y in range(ylo, yhi):
                            for xx in range(xlo, xhi):
                                out[b, ci, y, xx] += x[b, ci, y + dy - radius, xx + dx - radius]
    return out_arr
