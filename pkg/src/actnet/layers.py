"""Host-network layers (dense and convolutional) and the structural layers the
models need. Dense inputs are (N, n); image inputs are (N, C, H, W)."""
import numpy as np

from . import ops
from .autograd import Parameter
from .core import ConvGeometry
from .errors import DimensionError
from .module import Module


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Module):
    def __init__(self, n_in, n_out, bias=False, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng()
        self.weight = Parameter(glorot_uniform(rng, (n_out, n_in), n_in, n_out, dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype)) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"dense layer expects width {self.n_in}, got input {x.shape}")
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel=3, stride=1, padding=None, bias=False, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng()
        self.geom = ConvGeometry.same(kernel, stride) if padding is None else ConvGeometry(kernel, kernel, stride, padding)
        self.weight = Parameter(
            glorot_uniform(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel, c_out * kernel * kernel, dtype)
        )
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None
        self.c_in, self.c_out = c_in, c_out

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.geom)


class MaxPool2(Module):
    def forward(self, x):
        return ops.maxpool2(x)


class Upsample2(Module):
    def forward(self, x):
        return ops.upsample2(x)


class Flatten(Module):
    def forward(self, x):
        return ops.flatten(x)


def concat_channels(a, b):
    return ops.concat_channels(a, b)
