"""Losses, plain/momentum SGD, and the seeded epoch loop."""
import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .autograd import Tensor, no_grad
from .errors import DivergenceError

log = logging.getLogger(__name__)

PRECISIONS = {"single": np.float32, "double": np.float64}


def softmax_xent(logits, labels):
    return ops.softmax_xent(logits, labels)


def mse(pred, target):
    return ops.mse(pred, target)


LOSSES = {"softmax_xent": softmax_xent, "mse": mse}


class SGD:
    """w <- w - lr * v with v <- momentum * v + g (v = g when momentum is 0).

    Host weights and activation-net weights are updated together, with the same
    rule and learning rate.
    """

    def __init__(self, params, lr=0.01, momentum=0.0):
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params] if momentum else None

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                self.zero_grad()
                raise DivergenceError(f"non-finite gradient in {p.name or 'parameter'}; step aborted")
        for i, p in enumerate(self.params):
            lr = p.data.dtype.type(self.lr)
            if self.velocity is not None:
                v = self.velocity[i]
                v *= p.data.dtype.type(self.momentum)
                v += p.grad
                p.data -= lr * v
            else:
                p.data -= lr * p.grad
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def sgd_step(params, lr, momentum=0.0, state=None):
    """One update of ``params`` from their gradients; ``state`` carries momentum buffers."""
    opt = state if state is not None else SGD(params, lr, momentum)
    opt.step()
    return opt


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.0
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    precision: str = "single"
    loss: str | None = None  # default: the model's own loss
    val_fraction: float = 0.1
    eval_batch_size: int = 256

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    metric: float
    wall_seconds: float


@dataclass
class RunRecord:
    metric_name: str
    epochs: list = field(default_factory=list)
    test_metric: float | None = None
    test_loss: float | None = None
    best_epoch: int = 0
    diverged: bool = False
    divergence: str = ""
    seed: int = 0
    config: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    model: str = ""
    n_parameters: int = 0

    @property
    def final_train_loss(self):
        return self.epochs[-1].train_loss if self.epochs else float("nan")

    @property
    def final_val_loss(self):
        return self.epochs[-1].val_loss if self.epochs else float("nan")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def losses_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "metric"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.metric)])
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _batches(n, size, order=None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, size):
        yield idx[start : start + size]


def evaluate(model, ds, loss_name, batch_size=256):
    """(mean loss, metric) over ``ds``; metric is accuracy or MSE by task."""
    if len(ds) == 0:
        return float("nan"), float("nan")
    loss_fn = LOSSES[loss_name]
    total, correct = 0.0, 0
    with no_grad():
        for idx in _batches(len(ds), batch_size):
            x = Tensor(ds.images[idx].astype(model.dtype, copy=False))
            out = model(x)
            target = ds.targets[idx]
            if loss_name == "mse":
                target = target.astype(model.dtype, copy=False)
            total += float(loss_fn(out, target).data) * len(idx)
            if ds.task == "classification":
                correct += int((out.data.argmax(axis=1) == target).sum())
    loss = total / len(ds)
    metric = correct / len(ds) if ds.task == "classification" else loss
    return loss, metric


def split_validation(ds, fraction, seed):
    """Seeded train/validation split; returns (train, val)."""
    n_val = int(round(len(ds) * fraction))
    perm = np.random.default_rng(seed).permutation(len(ds))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    return ds.take(train_idx), ds.take(val_idx)


def train(model, data, cfg, test=None):
    """Train ``model`` on ``data`` with SGD; returns a RunRecord.

    Every random choice (validation split, batch order) comes from one
    generator seeded with ``cfg.seed``. Epoch 0 is the evaluation before any
    update. The snapshot with the lowest validation loss is restored at the end
    and scored on ``test``.
    """
    loss_name = cfg.loss or model.spec.loss
    loss_fn = LOSSES[loss_name]
    dtype = PRECISIONS[cfg.precision]
    if model.dtype != np.dtype(dtype):
        model.astype(dtype)
    rng = np.random.default_rng(cfg.seed)
    train_ds, val_ds = split_validation(data, cfg.val_fraction, int(rng.integers(2**31)))
    record = RunRecord(
        metric_name="accuracy" if data.task == "classification" else "mse",
        seed=cfg.seed,
        config=asdict(cfg),
        data={"train": len(train_ds), "val": len(val_ds), "test": len(test) if test is not None else 0, **data.meta},
        model=model.spec.name,
        n_parameters=model.num_parameters(),
    )
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum)
    model.zero_grad()

    start = time.perf_counter()
    tr_loss, _ = evaluate(model, train_ds, loss_name, cfg.eval_batch_size)
    val_loss, metric = evaluate(model, val_ds if len(val_ds) else train_ds, loss_name, cfg.eval_batch_size)
    record.epochs.append(EpochStats(0, tr_loss, val_loss, metric, time.perf_counter() - start))
    best_val = val_loss if np.isfinite(val_loss) else np.inf
    best_state = model.state_dict()

    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_ds))
        total, seen = 0.0, 0
        try:
            # overflow on the way to divergence is expected; it is detected below
            with np.errstate(over="ignore", invalid="ignore"):
                for idx in _batches(len(train_ds), cfg.batch_size, order):
                    x = Tensor(train_ds.images[idx].astype(dtype, copy=False))
                    target = train_ds.targets[idx]
                    if loss_name == "mse":
                        target = target.astype(dtype, copy=False)
                    loss = loss_fn(model(x), target)
                    value = float(loss.data)
                    if not np.isfinite(value):
                        raise DivergenceError(f"non-finite loss {value} in epoch {epoch}")
                    total += value * len(idx)
                    seen += len(idx)
                    loss.backward()
                    opt.step()
        except DivergenceError as exc:
            log.warning("run diverged: %s", exc)
            record.diverged = True
            record.divergence = str(exc)
            break
        val_loss, metric = evaluate(model, val_ds if len(val_ds) else train_ds, loss_name, cfg.eval_batch_size)
        stats = EpochStats(epoch, total / seen, val_loss, metric, time.perf_counter() - start)
        record.epochs.append(stats)
        log.info("epoch %d: train %.5f val %.5f %s %.4f", epoch, stats.train_loss, val_loss, record.metric_name, metric)
        if np.isfinite(val_loss) and val_loss < best_val:
            best_val, best_state, record.best_epoch = val_loss, model.state_dict(), epoch

    model.load_state_dict(best_state)
    if test is not None and len(test):
        record.test_loss, record.test_metric = evaluate(model, test, loss_name, cfg.eval_batch_size)
    return record
