"""Activation networks: auxiliary layers that read a host layer's intermediate
output u and emit polynomial coefficients for every node (dense) or every pixel
(convolutional), which are then applied to u itself.

Dense:  a[k, i] = sum_j V[k, i, j] u[j] + b[k, i]      (mode "full")
        a[k, i] = sum_j V[k, j] u[j] + b[k, i]         (mode "shared")
Conv:   a[k, i] = conv(v[k, i], u) + b[k, i]           (over all channels of u)
Both:   x[i] = sum_k a[k, i] * u[i]**k
"""
from dataclasses import dataclass

import numpy as np

from . import ops
from .activations import identity_coeffs, poly_eval, taylor_preset
from .autograd import Parameter, Tensor, no_grad
from .core import K_MAX, ConvGeometry
from .errors import DimensionError, SpecError
from .layers import glorot_uniform
from .module import Module

MODES = ("full", "shared")
INITS = ("identity", "tanh_taylor", "zero_v_tanh")


@dataclass(frozen=True)
class ANConfig:
    order: int = 5
    mode: str = "full"
    kernel: int = 3
    u_clip: float | None = 5.0
    init: str = "zero_v_tanh"

    def __post_init__(self):
        if not 1 <= self.order <= K_MAX:
            raise SpecError(f"polynomial order must be in [1, {K_MAX}], got {self.order}")
        if self.mode not in MODES:
            raise SpecError(f"activation-net mode must be one of {MODES}, got {self.mode!r}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise SpecError(f"activation-net kernel must be odd and positive, got {self.kernel}")
        if self.u_clip is not None and not self.u_clip > 0:
            raise SpecError(f"u_clip must be positive or None, got {self.u_clip}")
        if self.init not in INITS:
            raise SpecError(f"activation-net init must be one of {INITS}, got {self.init!r}")


def _bias_init(config, n):
    c = identity_coeffs(config.order) if config.init == "identity" else taylor_preset("tanh", config.order)
    return np.repeat(c[:, None], n, axis=1)  # (K+1, n)


def an_parameter_count(config, n_nodes, layer_kind):
    k1 = config.order + 1
    if layer_kind == "dense":
        weights = k1 * n_nodes * n_nodes if config.mode == "full" else k1 * n_nodes
        return weights + k1 * n_nodes
    if layer_kind == "conv":
        return k1 * n_nodes * (n_nodes * config.kernel * config.kernel + 1)
    raise ValueError(f"layer kind must be 'dense' or 'conv', got {layer_kind!r}")


class DenseActivationNet(Module):
    def __init__(self, n_nodes, config=ANConfig(), rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng()
        k1 = config.order + 1
        self.config = config
        self.n_nodes = n_nodes
        shape = (k1, n_nodes, n_nodes) if config.mode == "full" else (k1, n_nodes)
        if config.init == "tanh_taylor":
            v = glorot_uniform(rng, shape, n_nodes, k1 * n_nodes, dtype)
        else:
            v = np.zeros(shape, dtype=dtype)
        self.V = Parameter(v)
        self.b = Parameter(_bias_init(config, n_nodes).astype(dtype))

    def coefficients(self, u):
        """(N, n) intermediate outputs -> (N, K+1, n) coefficients."""
        if u.ndim != 2 or u.shape[1] != self.n_nodes:
            raise DimensionError(f"activation net for {self.n_nodes} nodes got input {u.shape}")
        n = u.shape[0]
        k1 = self.config.order + 1
        if self.config.mode == "full":
            w = ops.reshape(self.V, (k1 * self.n_nodes, self.n_nodes))
            a = ops.add(ops.linear(u, w), ops.reshape(self.b, (k1 * self.n_nodes,)))
            return ops.reshape(a, (n, k1, self.n_nodes))
        s = ops.linear(u, self.V)  # (N, K+1), identical for every node
        return ops.add(ops.reshape(s, (n, k1, 1)), self.b)

    def forward(self, u):
        n = u.shape[0]
        a = self.coefficients(u)
        if self.config.u_clip is not None:
            u = ops.clip(u, self.config.u_clip)
        a = ops.reshape(a, a.shape + (1,))
        x = ops.poly_activate(a, ops.reshape(u, (n, self.n_nodes, 1)))
        return ops.reshape(x, (n, self.n_nodes))


class ConvActivationNet(Module):
    def __init__(self, n_channels, config=ANConfig(), rng=None, dtype=np.float32, padding_mode="zeros"):
        rng = rng if rng is not None else np.random.default_rng()
        k1 = config.order + 1
        kk = config.kernel
        self.config = config
        self.n_nodes = n_channels
        self.padding_mode = padding_mode
        if padding_mode == "zeros":
            self.geom = ConvGeometry.same(kk)
        elif padding_mode == "circular":
            self.geom = ConvGeometry(kk, kk, 1, 0)
        else:
            raise SpecError(f"padding_mode must be 'zeros' or 'circular', got {padding_mode!r}")
        shape = (k1 * n_channels, n_channels, kk, kk)
        if config.init == "tanh_taylor":
            v = glorot_uniform(rng, shape, n_channels * kk * kk, k1 * n_channels * kk * kk, dtype)
        else:
            v = np.zeros(shape, dtype=dtype)
        # output channel k * n + i carries coefficient k of channel i
        self.v = Parameter(v)
        self.b = Parameter(_bias_init(config, n_channels).reshape(-1).astype(dtype))

    def coefficients(self, u):
        """(N, C, H, W) -> (N, K+1, C, H, W) per-pixel coefficient maps."""
        if u.ndim != 4 or u.shape[1] != self.n_nodes:
            raise DimensionError(f"activation net for {self.n_nodes} channels got input {u.shape}")
        n, c, h, w = u.shape
        src = u
        if self.padding_mode == "circular":
            src = ops.pad_circular(u, (self.config.kernel - 1) // 2)
        a = ops.conv2d(src, self.v, self.b, self.geom)
        if a.shape[2:] != (h, w):
            raise DimensionError(f"coefficient maps {a.shape[2:]} are not congruent with u {(h, w)}")
        return ops.reshape(a, (n, self.config.order + 1, c, h, w))

    def forward(self, u):
        n, c, h, w = u.shape
        a = self.coefficients(u)
        if self.config.u_clip is not None:
            u = ops.clip(u, self.config.u_clip)
        a = ops.reshape(a, (n, self.config.order + 1, c, h * w))
        x = ops.poly_activate(a, ops.reshape(u, (n, c, h * w)))
        return ops.reshape(x, (n, c, h, w))


def dump_activation_shapes(an, u, sites, u_grid, layer=""):
    """Curves the activation net would apply at chosen sites for input ``u``.

    ``u`` is one sample: (n,) for dense nets, (C, H, W) for conv nets.
    ``sites`` lists node indices (dense) or (channel, row, col) triples (conv).
    Returns rows (layer, node, pixel_row, pixel_col, u_grid, activation_value);
    pixel coordinates are -1 for dense layers.
    """
    grid = np.asarray(u_grid, dtype=np.float64)
    coeffs = site_coefficients(an, u)
    rows = []
    for site in sites:
        if isinstance(an, DenseActivationNet):
            node = int(site)
            if not 0 <= node < an.n_nodes:
                raise IndexError(f"node {node} outside [0, {an.n_nodes})")
            c = coeffs[:, node]
            r = col = -1
        else:
            node, r, col = (int(s) for s in site)
            _, ch, h, w = coeffs.shape
            if not (0 <= node < ch and 0 <= r < h and 0 <= col < w):
                raise IndexError(f"site {(node, r, col)} outside ({ch}, {h}, {w})")
            c = coeffs[:, node, r, col]
        values = poly_eval(c.astype(np.float64), grid)
        rows.extend((layer, node, r, col, float(g), float(v)) for g, v in zip(grid, values))
    return rows


def site_coefficients(an, u):
    """Coefficient tensor induced by one sample ``u`` (no gradient recorded)."""
    data = u.data if isinstance(u, Tensor) else np.asarray(u)
    with no_grad():
        return an.coefficients(Tensor(data[None].astype(an.b.dtype))).data[0]
