"""Differentiable operations. Each returns a Tensor recorded on the tape."""
import numpy as np

from . import core, kernels
from .autograd import Tensor, make_node, note_branch
from .errors import DimensionError, GeometryError


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary_operands(a, b):
    # python scalars take the dtype of the tensor they meet
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def add(a, b):
    a, b = _binary_operands(a, b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(out, (a, b), backward, "add")


def sub(a, b):
    a, b = _binary_operands(a, b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(out, (a, b), backward, "sub")


def mul(a, b):
    a, b = _binary_operands(a, b)
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward, "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward, "matmul")


def sum_all(x):
    x = as_tensor(x)
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(out, (x,), backward, "sum")


def mean(x):
    x = as_tensor(x)
    n = x.data.size
    out = np.asarray(x.data.sum() / n, dtype=x.dtype)

    def backward(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return make_node(out, (x,), backward, "mean")


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return make_node(out, (x,), backward, "reshape")


def flatten(x):
    """(N, ...) -> (N, prod(...)), row-major."""
    return reshape(x, (x.shape[0], -1))


def concat_channels(a, b):
    if a.ndim != 4 or b.ndim != 4:
        raise DimensionError(f"concat_channels needs (N, C, H, W) inputs, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise GeometryError(f"cannot concatenate {a.shape} and {b.shape}: batch or spatial extents differ")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        return g[:, :ca], g[:, ca:]

    return make_node(out, (a, b), backward, "concat")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    note_branch(mask)
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)

    def backward(g):
        return (g * mask,)

    return make_node(out, (x,), backward, "relu")


def sigmoid(x):
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        return (g * out * (1 - out),)

    return make_node(out, (x,), backward, "sigmoid")


def clip(x, bound):
    """Symmetric clamp; gradient passes inside [-bound, bound] and is zero outside."""
    x = as_tensor(x)
    out = np.clip(x.data, -bound, bound)
    inside = (x.data >= -bound) & (x.data <= bound)
    note_branch(inside)

    def backward(g):
        return (g * inside,)

    return make_node(out, (x,), backward, "clip")


def power(x, k):
    x = as_tensor(x)
    out = core.elementwise_pow(x.data, k)

    def backward(g):
        if k == 0:
            return (np.zeros_like(g),)
        return (g * k * core.elementwise_pow(x.data, k - 1),)

    return make_node(out, (x,), backward, "pow")


def linear(x, weight, bias=None):
    """x (N, n_in) times weight (n_out, n_in) transposed, plus optional bias."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward, "linear")


def conv2d(x, weight, bias, geom):
    """Batched cross-correlation: x (N, C, H, W), weight (C_out, C, kh, kw)."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d needs (N, C, H, W) input, got {x.shape}")
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise DimensionError(f"input has {c} channels but kernels {weight.shape} expect {ci}")
    ho, wo = geom.output_shape(h, w)
    cols = kernels.im2col(x.data, kh, kw, geom.stride, geom.padding)
    w2 = weight.data.reshape(co, -1)
    out = (w2 @ cols).reshape(co, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, co, 1, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(co, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = kernels.col2im(w2.T @ g2, x.shape, kh, kw, geom.stride, geom.padding)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward, "conv2d")


def maxpool2(x):
    if x.ndim != 4:
        raise DimensionError(f"maxpool2 needs (N, C, H, W) input, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise GeometryError(f"maxpool2 needs even spatial extents, got {x.shape[2]}x{x.shape[3]}")
    out, idx = kernels.maxpool2_forward(x.data)
    note_branch(idx)

    def backward(g):
        return (kernels.maxpool2_backward(g, idx, x.shape),)

    return make_node(out, (x,), backward, "maxpool2")


def upsample2(x):
    if x.ndim != 4:
        raise DimensionError(f"upsample2 needs (N, C, H, W) input, got {x.shape}")
    out = core.upsample_nearest2(x.data)
    n, c, h, w = x.shape

    def backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_node(out, (x,), backward, "upsample2")


def poly_activate(coeffs, u):
    """Per-site polynomial: coeffs (N, K+1, C, S), u (N, C, S) -> (N, C, S)."""
    if coeffs.ndim != 4 or u.ndim != 3 or coeffs.shape[0] != u.shape[0] or coeffs.shape[2:] != u.shape[1:]:
        raise DimensionError(f"coefficients {coeffs.shape} do not match sites {u.shape}")
    out = kernels.poly_forward(coeffs.data, u.data)

    def backward(g):
        ga, gu = kernels.poly_backward(g, coeffs.data, u.data)
        return ga, gu

    return make_node(out, (coeffs, u), backward, "poly")


def poly_fixed(coeffs, u):
    """Polynomial with one coefficient vector (K+1,) shared by every element of u."""
    a = coeffs.data
    order = a.shape[0] - 1
    out = np.full_like(u.data, a[order])
    for k in range(order - 1, -1, -1):
        out *= u.data
        out += a[k]

    def backward(g):
        ga = np.empty_like(a)
        p = g.copy()
        for k in range(order + 1):
            ga[k] = p.sum()
            p *= u.data
        if order == 0:
            return ga, np.zeros_like(u.data)
        d = np.full_like(u.data, order * a[order])
        for k in range(order - 1, 0, -1):
            d = d * u.data + k * a[k]
        return ga, g * d

    return make_node(out, (coeffs, u), backward, "poly_fixed")


def box_sum(x, radius):
    """Zero-padded (2r+1)^2 window sum per channel; self-adjoint."""
    if x.ndim != 4:
        raise DimensionError(f"box_sum needs (N, C, H, W) input, got {x.shape}")
    out = kernels.box_sum(x.data, radius)

    def backward(g):
        return (kernels.box_sum(g, radius),)

    return make_node(out, (x,), backward, "box_sum")


def softmax_xent(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"softmax_xent needs (N, C>=2) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    out = np.asarray(-logp[np.arange(n), labels].mean(), dtype=logits.dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1
        return (p * (g / n),)

    return make_node(out, (logits,), backward, "softmax_xent")


def mse(pred, target):
    target = as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n, dtype=pred.dtype)

    def backward(g):
        gp = diff * (2 * g / n)
        return gp, -gp

    return make_node(out, (pred, target), backward, "mse")


def pad_circular(x, p):
    """Wrap-around padding of the two spatial axes by ``p`` pixels."""
    n, c, h, w = x.shape
    rows = (np.arange(h + 2 * p) - p) % h
    cols = (np.arange(w + 2 * p) - p) % w
    out = x.data[:, :, rows][:, :, :, cols]

    def backward(g):
        gr = np.zeros((n, c, h, w + 2 * p), dtype=g.dtype)
        np.add.at(gr, (slice(None), slice(None), rows), g)
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        np.add.at(gx, (slice(None), slice(None), slice(None), cols), gr)
        return (gx,)

    return make_node(out, (x,), backward, "pad_circular")
