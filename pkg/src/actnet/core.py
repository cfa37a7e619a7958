"""Numeric kernels on plain arrays: matmul, conv2d, powers, pooling, upsampling.

Image tensors are channels-first. Functions accept a single image (C, H, W) or
a batch (N, C, H, W) and return the same rank they were given. Tensors are
numpy arrays; float32 is used for training and float64 for gradient checks.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, GeometryError

K_MAX = 8


@dataclass(frozen=True)
class ConvGeometry:
    kernel_height: int
    kernel_width: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel_height < 1 or self.kernel_width < 1:
            raise GeometryError(f"kernel extents must be positive, got {self.kernel_height}x{self.kernel_width}")
        if self.stride < 1:
            raise GeometryError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise GeometryError(f"padding must be non-negative, got {self.padding}")

    @classmethod
    def same(cls, kernel, stride=1):
        """Padding that keeps H and W unchanged at stride 1. Odd kernels only."""
        if kernel % 2 == 0:
            raise GeometryError(f"'same' padding needs an odd kernel, got {kernel}; give padding explicitly")
        return cls(kernel, kernel, stride, (kernel - 1) // 2)

    def output_shape(self, h, w):
        ho = (h + 2 * self.padding - self.kernel_height) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_width) // self.stride + 1
        if ho < 1 or wo < 1:
            raise GeometryError(
                f"{self.kernel_height}x{self.kernel_width} kernel (stride {self.stride}, padding {self.padding}) "
                f"on {h}x{w} input gives non-positive output {ho}x{wo}"
            )
        return ho, wo


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")


def conv2d(x, kernels_, bias, geom):
    """Cross-correlation of ``x`` with ``kernels_`` (C_out, C_in, kh, kw) plus bias."""
    xb, single = _batched(x)
    n, c, h, w = xb.shape
    co, ci, kh, kw = kernels_.shape
    if ci != c:
        raise DimensionError(f"input has {c} channels but kernels {kernels_.shape} expect {ci}")
    if (kh, kw) != (geom.kernel_height, geom.kernel_width):
        raise GeometryError(f"kernel {kh}x{kw} disagrees with geometry {geom}")
    ho, wo = geom.output_shape(h, w)
    cols = kernels.im2col(xb, kh, kw, geom.stride, geom.padding)
    out = kernels_.reshape(co, -1) @ cols
    out = out.reshape(co, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + np.asarray(bias).reshape(1, co, 1, 1)
    out = np.ascontiguousarray(out)
    return out[0] if single else out


def elementwise_pow(t, k, k_max=K_MAX):
    if k < 0 or k > k_max:
        raise ValueError(f"power {k} outside [0, {k_max}]")
    t = np.asarray(t)
    out = np.ones_like(t)
    for _ in range(k):
        out = out * t
    return out


def maxpool2(x):
    """2x2/stride-2 max pooling. Returns (pooled, argmax-within-window indices)."""
    xb, single = _batched(x)
    if xb.shape[2] % 2 or xb.shape[3] % 2:
        raise GeometryError(f"maxpool2 needs even spatial extents, got {xb.shape[2]}x{xb.shape[3]}")
    out, idx = kernels.maxpool2_forward(xb)
    return (out[0], idx[0]) if single else (out, idx)


def upsample_nearest2(x):
    xb, single = _batched(x)
    out = np.repeat(np.repeat(xb, 2, axis=2), 2, axis=3)
    return out[0] if single else out
