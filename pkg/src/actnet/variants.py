"""Competing adaptive activations: lateral inhibition and attention gating."""
import numpy as np

from . import ops
from .autograd import Parameter
from .errors import DimensionError, SpecError
from .module import Module


class InhibitionActivation(Module):
    """x = relu(u - c * (sum of neighbours of u)).

    Image inputs use a per-channel square window centred on each pixel (zero
    padded); the centre is part of the window and subtracted once. Dense inputs
    treat every other node of the layer as a neighbour. ``strength=None`` picks
    1/(number of neighbours), which cancels flat regions exactly.
    """

    def __init__(self, window=3, strength=None, learnable=False, n_nodes=None, dtype=np.float32):
        if window < 1 or window % 2 == 0:
            raise SpecError(f"inhibition window must be odd, got {window}")
        self.window = window
        if strength is None:
            if n_nodes is not None:  # dense layer
                strength = 1.0 / max(n_nodes - 1, 1)
            else:
                strength = 1.0 / (window * window - 1) if window > 1 else 0.0
        if not np.isfinite(strength):
            raise SpecError(f"inhibition strength must be finite, got {strength}")
        c = np.asarray(strength, dtype=dtype)
        if learnable:
            self.strength = Parameter(c)
        else:
            self.fixed_strength = c
            self.strength = None

    def _c(self):
        return self.strength if self.strength is not None else self.fixed_strength

    def forward(self, u):
        if u.ndim == 4:
            neighbours = ops.sub(ops.box_sum(u, self.window // 2), u)
        elif u.ndim == 2:
            total = ops.linear(u, ops.as_tensor(np.ones((1, u.shape[1]), dtype=u.dtype)))
            neighbours = ops.sub(total, u)
        else:
            raise DimensionError(f"inhibition needs (N, C, H, W) or (N, n) input, got {u.shape}")
        iota = ops.mul(neighbours, self._c())
        return ops.relu(ops.sub(u, iota))


class AttentionActivation(Module):
    """x = sigmoid(p * u + q) * relu(u), with one (p, q) pair per node or channel."""

    def __init__(self, n_nodes, dtype=np.float32):
        self.p = Parameter(np.zeros(n_nodes, dtype=dtype))
        self.q = Parameter(np.zeros(n_nodes, dtype=dtype))
        self.n_nodes = n_nodes

    def gate(self, u):
        if u.shape[1] != self.n_nodes:
            raise DimensionError(f"attention for {self.n_nodes} nodes got input {u.shape}")
        shape = (1, self.n_nodes) + (1,) * (u.ndim - 2)
        z = ops.add(ops.mul(u, ops.reshape(self.p, shape)), ops.reshape(self.q, shape))
        return ops.sigmoid(z)

    def forward(self, u):
        return ops.mul(self.gate(u), ops.relu(u))
