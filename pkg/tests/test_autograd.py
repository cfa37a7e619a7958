import numpy as np
import pytest

from actnet import ops
from actnet.activation_net import ANConfig, ConvActivationNet
from actnet.activations import taylor_preset
from actnet.autograd import Parameter, Tensor, backward, is_recording, no_grad
from actnet.core import ConvGeometry
from actnet.gradcheck import check_gradients, relative_error
from actnet.layers import Dense


def params(rng, **shapes):
    return {name: Parameter(rng.normal(size=shape), name) for name, shape in shapes.items()}


def assert_gradcheck(loss_fn, named, tol=1e-6, **kw):
    report = check_gradients(loss_fn, list(named.items()), **kw)
    assert report.worst < tol, report.to_json()
    return report


def test_linear_scalar_gradient():
    w = Parameter(np.array(2.0))
    backward(ops.mul(w, 3.0))
    assert w.grad == 3.0


def test_power_rule():
    u = Parameter(np.array([1.0, -2.0]))
    backward(ops.sum_all(ops.power(u, 2)))
    np.testing.assert_array_equal(u.grad, [2.0, -4.0])


def test_gradients_accumulate_until_zeroed():
    w = Parameter(np.array(1.0))
    backward(ops.mul(w, 3.0))
    backward(ops.mul(w, 3.0))
    assert w.grad == 6.0
    w.zero_grad()
    assert w.grad == 0.0


def test_shared_subexpression_sums_both_paths():
    w = Parameter(np.array(3.0))
    y = ops.mul(w, w)  # w used twice
    backward(ops.add(y, w))
    assert w.grad == 7.0


def test_backward_requires_scalar():
    w = Parameter(np.ones(3))
    with pytest.raises(ValueError, match="scalar"):
        backward(ops.mul(w, 2.0))


def test_no_grad_records_nothing():
    w = Parameter(np.ones(2))
    with no_grad():
        assert not is_recording()
        y = ops.mul(w, 2.0)
    assert is_recording()
    assert not y.requires_grad and y.parents == ()


def test_long_chain_does_not_recurse():
    w = Parameter(np.array(1.0))
    y = w
    for _ in range(5000):
        y = ops.add(y, 0.0)
    backward(y)
    assert w.grad == 1.0


def test_composite_dense_poly_mse_matches_differences(rng):
    layer = Dense(4, 3, bias=True, rng=rng, dtype=np.float64)
    coeffs = Parameter(taylor_preset("tanh", 5), "coeffs")
    x = Tensor(rng.normal(size=(5, 4)))
    target = rng.normal(size=(5, 3))

    def loss():
        return ops.mse(ops.poly_fixed(coeffs, layer(x)), target)

    named = dict(layer.named_parameters("dense"), coeffs=coeffs)
    assert_gradcheck(loss, named, tol=1e-5)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)
    assert relative_error(2.0, 1.0) == 0.5


def test_gradcheck_linear_regression():
    w = Parameter(np.array([0.7]), "w")
    x, y = np.array([[1.5], [-2.0], [0.3]]), np.array([[1.0], [0.5], [-1.0]])
    xt = Tensor(x)

    def loss():
        return ops.mse(ops.matmul(xt, ops.reshape(w, (1, 1))), y)

    report = assert_gradcheck(loss, {"w": w}, tol=1e-9)
    assert report.checked == 1
    closed = np.mean(2 * x * (x * 0.7 - y))
    loss_value = loss()
    w.zero_grad()
    loss_value.backward()
    assert w.grad[0] == pytest.approx(closed, rel=1e-12)


def test_gradcheck_zero_parameters():
    report = check_gradients(lambda: Tensor(np.array(1.0)), [])
    assert report.max_relative_error == {} and report.passed


def test_gradcheck_requires_double():
    w = Parameter(np.ones(2, dtype=np.float32), "w")
    with pytest.raises(TypeError, match="double"):
        check_gradients(lambda: ops.sum_all(w), [("w", w)])


def test_gradcheck_catches_a_wrong_rule(rng):
    w = Parameter(rng.normal(size=3), "w")

    def bad_square(t):
        from actnet.autograd import make_node

        return make_node(t.data**2, (t,), lambda g: (g * t.data,), "bad")  # missing factor 2

    report = check_gradients(lambda: ops.sum_all(bad_square(w)), [("w", w)])
    assert not report.passed and report.worst == pytest.approx(0.5)


def test_conv_activation_net_gradcheck(rng):
    an = ConvActivationNet(2, ANConfig(order=3, init="tanh_taylor"), rng, np.float64)
    u = Parameter(rng.normal(size=(1, 2, 6, 6)) * 0.5, "u")
    target = rng.normal(size=(1, 2, 6, 6))
    named = dict(an.named_parameters("an"), u=u)
    assert_gradcheck(lambda: ops.mse(an(u), target), named, tol=1e-4)


def test_pool_upsample_concat_gradcheck(rng):
    x = Parameter(rng.normal(size=(2, 2, 4, 4)), "x")
    skip = Parameter(rng.normal(size=(2, 3, 4, 4)), "skip")
    target = rng.normal(size=(2, 5, 4, 4))

    def loss():
        return ops.mse(ops.concat_channels(ops.upsample2(ops.maxpool2(x)), skip), target)

    assert_gradcheck(loss, {"x": x, "skip": skip}, tol=1e-4)


@pytest.mark.parametrize(
    "name,build",
    [
        ("add_broadcast", lambda p, r: ops.add(p["a"], p["row"])),
        ("sub", lambda p, r: ops.sub(p["a"], p["b"])),
        ("mul_broadcast", lambda p, r: ops.mul(p["a"], p["row"])),
        ("matmul", lambda p, r: ops.matmul(p["a"], p["m"])),
        ("mean", lambda p, r: ops.mean(p["a"])),
        ("sigmoid", lambda p, r: ops.sigmoid(p["a"])),
        ("relu", lambda p, r: ops.relu(p["a"])),
        ("clip", lambda p, r: ops.clip(ops.mul(p["a"], 3.0), 2.0)),
        ("power", lambda p, r: ops.power(p["a"], 3)),
        ("linear", lambda p, r: ops.linear(p["a"], p["w"], p["bias"])),
        ("conv2d", lambda p, r: ops.conv2d(p["img"], p["k"], p["kb"], ConvGeometry(3, 3, 2, 1))),
        ("maxpool", lambda p, r: ops.maxpool2(p["img"])),
        ("upsample", lambda p, r: ops.upsample2(p["img"])),
        ("box_sum", lambda p, r: ops.box_sum(p["img"], 1)),
        ("pad_circular", lambda p, r: ops.pad_circular(p["img"], 1)),
        ("poly_activate", lambda p, r: ops.poly_activate(p["coef"], p["sites"])),
        ("poly_fixed", lambda p, r: ops.poly_fixed(p["c"], p["a"])),
        ("flatten", lambda p, r: ops.flatten(p["img"])),
    ],
)
def test_op_gradients(name, build, rng):
    p = params(
        rng, a=(3, 4), b=(3, 4), row=(1, 4), m=(4, 2), w=(5, 4), bias=(5,),
        img=(2, 2, 4, 4), k=(3, 2, 3, 3), kb=(3,), coef=(2, 4, 3, 5), sites=(2, 3, 5), c=(4,),
    )
    out = build(p, rng)
    weights = Tensor(rng.normal(size=out.shape))
    report = check_gradients(lambda: ops.sum_all(ops.mul(build(p, rng), weights)), list(p.items()))
    assert report.worst < 1e-6, (name, report.to_json())


def test_softmax_xent_gradient_is_softmax_minus_onehot(rng):
    logits = Parameter(rng.normal(size=(4, 5)), "z")
    labels = np.array([0, 3, 4, 1])
    backward(ops.softmax_xent(logits, labels))
    p = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
    p[np.arange(4), labels] -= 1
    np.testing.assert_allclose(logits.grad, p / 4, rtol=1e-12)
    logits.zero_grad()
    assert_gradcheck(lambda: ops.softmax_xent(logits, labels), {"z": logits})


def test_kink_coordinates_are_skipped():
    # u sits exactly on the ReLU kink, so its differences straddle two branches
    u = Parameter(np.array([0.0, 1.0, -1.0]), "u")
    report = check_gradients(lambda: ops.sum_all(ops.relu(u)), [("u", u)], samples=3)
    assert report.kinks_skipped == 1 and report.checked == 2 and report.passed
