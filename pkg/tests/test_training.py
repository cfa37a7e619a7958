import numpy as np
import pytest

from actnet import ops
from actnet.autograd import Parameter, Tensor
from actnet.data import Dataset
from actnet.errors import DivergenceError
from actnet.models import LayerSpec, ModelSpec, build
from actnet.training import SGD, TrainConfig, evaluate, mse, sgd_step, softmax_xent, split_validation, train


def test_sgd_step_arithmetic():
    w = Parameter(np.array([1.0]))
    w.grad[:] = 0.5
    sgd_step([w], lr=0.1)
    assert w.data[0] == pytest.approx(0.95)
    assert w.grad[0] == 0  # zeroed after the step


def test_zero_gradient_leaves_weights():
    w = Parameter(np.array([1.0, -2.0]))
    SGD([w], 0.5).step()
    np.testing.assert_array_equal(w.data, [1.0, -2.0])


def test_momentum_two_steps():
    w = Parameter(np.array([0.0]))
    opt = SGD([w], lr=0.1, momentum=0.9)
    for _ in range(2):
        w.grad[:] = 0.5
        opt.step()
    assert -w.data[0] == pytest.approx(0.1 * 0.5 * (1 + 1.9))


def test_half_rate_twice_equals_full_rate_once():
    a, b = Parameter(np.array([0.3, 0.7])), Parameter(np.array([0.3, 0.7]))
    g = np.array([0.2, -0.4])
    a.grad[:] = g
    SGD([a], 0.1).step()
    opt = SGD([b], 0.05)
    for _ in range(2):
        b.grad[:] = g
        opt.step()
    np.testing.assert_allclose(a.data, b.data, rtol=1e-15)


def test_non_finite_gradient_aborts_step():
    w = Parameter(np.array([1.0]))
    w.grad[:] = np.nan
    with pytest.raises(DivergenceError):
        SGD([w], 0.1).step()
    assert w.data[0] == 1.0


def test_optimizer_validation():
    with pytest.raises(ValueError):
        SGD([], lr=0)
    with pytest.raises(ValueError):
        SGD([], lr=0.1, momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(precision="half")


def test_softmax_xent_examples():
    assert float(softmax_xent(Tensor(np.zeros((1, 10))), [3]).data) == pytest.approx(np.log(10))
    logits = np.zeros((1, 10))
    logits[0, 2] = 1e4
    assert float(softmax_xent(Tensor(logits), [2]).data) == 0.0
    with pytest.raises(ValueError):
        softmax_xent(Tensor(np.zeros((1, 3))), [3])


def test_mse_examples():
    x = np.arange(6.0).reshape(2, 3)
    assert float(mse(Tensor(x), x).data) == 0
    assert float(mse(Tensor(np.zeros(4)), np.ones(4)).data) == 1.0
    assert float(mse(Tensor(np.array([0.0, 2.0])), np.array([1.0, 1.0])).data) == 1.0


def toy_classification(n=64, seed=0):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, 4)).astype(np.float32)
    y = (x[:, 0] + x[:, 1] > 0).astype(np.int64)
    return Dataset(x, y)


def dense_spec(activation="relu"):
    return ModelSpec("toy", (4,), [LayerSpec("h", "dense", 8, activation=activation), LayerSpec("out", "dense", 2)], "softmax_xent")


def test_zero_epochs_records_initial_evaluation():
    rec = train(build(dense_spec()), toy_classification(), TrainConfig(epochs=0))
    assert len(rec.epochs) == 1 and rec.epochs[0].epoch == 0
    assert rec.best_epoch == 0 and not rec.diverged


def test_same_seed_same_trajectory():
    runs = [train(build(dense_spec("activation_net"), seed=3), toy_classification(), TrainConfig(epochs=3, seed=5)) for _ in range(2)]
    assert runs[0].losses_csv() == runs[1].losses_csv()
    other = train(build(dense_spec("activation_net"), seed=3), toy_classification(), TrainConfig(epochs=3, seed=6))
    assert other.losses_csv() != runs[0].losses_csv()


def test_linear_model_separates_two_points():
    data = Dataset(np.array([[1.0, 0.0, 0, 0], [-1.0, 0.0, 0, 0]], np.float32), np.array([1, 0]))
    spec = ModelSpec("lin", (4,), [LayerSpec("out", "dense", 2, bias=True)], "softmax_xent")
    model = build(spec, seed=0)
    cfg = TrainConfig(lr=0.5, epochs=500, batch_size=2, val_fraction=0.0)
    rec = train(model, data, cfg)
    assert rec.epochs[-1].train_loss < 0.01


def test_training_reduces_loss_and_reports():
    data = toy_classification(256)
    rec = train(build(dense_spec()), data, TrainConfig(lr=0.1, epochs=10), test=toy_classification(64, seed=1))
    assert rec.epochs[-1].train_loss < rec.epochs[0].train_loss
    assert rec.metric_name == "accuracy" and rec.test_metric > 0.8
    assert rec.losses_csv().splitlines()[0] == "epoch,train_loss,val_loss,metric"
    assert [e.epoch for e in rec.epochs] == list(range(11))
    assert all(np.isfinite([e.train_loss, e.val_loss]).all() for e in rec.epochs)


def test_divergence_is_flagged_not_raised():
    data = toy_classification(64)
    data.images *= 1e30
    rec = train(build(dense_spec("poly_fixed")), data, TrainConfig(lr=1.0, epochs=3))
    assert rec.diverged and "non-finite" in rec.divergence
    assert len(rec.epochs) < 4  # stops at the divergent epoch


def test_split_validation_is_seeded_and_disjoint():
    ds = toy_classification(50)
    ds.images[:, 0] = np.arange(50)
    tr, va = split_validation(ds, 0.2, 7)
    assert len(va) == 10 and len(tr) == 40
    assert not set(tr.images[:, 0]) & set(va.images[:, 0])
    tr2, _ = split_validation(ds, 0.2, 7)
    np.testing.assert_array_equal(tr.images, tr2.images)


def test_evaluate_denoising_metric_is_mse():
    spec = ModelSpec("id", (1, 4, 4), [LayerSpec("out", "conv", 1, kernel=1)], "mse")
    model = build(spec)
    model.hosts["out"].weight.data[:] = 1
    x = np.random.default_rng(0).uniform(size=(5, 1, 4, 4)).astype(np.float32)
    loss, metric = evaluate(model, Dataset(x, x, "denoising"), "mse")
    assert loss == metric == 0
