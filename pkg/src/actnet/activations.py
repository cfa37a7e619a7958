"""Input-independent activations: ReLU, exact sigmoid/tanh, polynomial presets,
and the learned-but-fixed polynomial activation shared by a whole layer."""
from fractions import Fraction

import numpy as np

from . import ops
from .autograd import Parameter
from .module import Module

# truncated Maclaurin series, coefficient index == power
_SERIES = {
    "sigmoid": [Fraction(1, 2), Fraction(1, 4), 0, Fraction(-1, 48), 0, Fraction(1, 480)],
    "tanh": [0, 1, 0, Fraction(-1, 3), 0, Fraction(2, 15), 0, Fraction(-17, 315)],
}


def taylor_preset(name, order):
    """Coefficients a_0..a_K of the truncated series for ``name``.

    Orders beyond the tabulated terms are zero-padded.
    """
    if name not in _SERIES:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_SERIES)}")
    if order < 1:
        raise ValueError(f"polynomial order must be >= 1, got {order}")
    terms = _SERIES[name][: order + 1]
    terms = list(terms) + [0] * (order + 1 - len(terms))
    return np.array([float(t) for t in terms])


def identity_coeffs(order):
    c = np.zeros(order + 1)
    c[1] = 1.0
    return c


def poly_eval(coeffs, u):
    """Evaluate sum_k coeffs[k] * u**k by Horner's scheme."""
    coeffs = np.asarray(coeffs)
    u = np.asarray(u)
    out = np.full(u.shape, coeffs[-1], dtype=np.result_type(coeffs, u))
    for a in coeffs[-2::-1]:
        out = out * u + a
    return out


def relu(u):
    u = np.asarray(u)
    return np.where(u > 0, u, 0).astype(u.dtype, copy=False)


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u)))


def tanh(u):
    return np.tanh(u)


class ReLU(Module):
    def forward(self, u):
        return ops.relu(u)


class Identity(Module):
    def forward(self, u):
        return u


class FixedPolyActivation(Module):
    """One learned coefficient vector applied to every node of a layer."""

    def __init__(self, order=5, init="tanh", u_clip=5.0, dtype=np.float32):
        if init == "identity":
            c = identity_coeffs(order)
        else:
            c = taylor_preset(init, order)
        self.coeffs = Parameter(c.astype(dtype))
        self.order = order
        self.u_clip = u_clip

    def forward(self, u):
        if self.u_clip is not None:
            u = ops.clip(u, self.u_clip)
        return ops.poly_fixed(self.coeffs, u)
