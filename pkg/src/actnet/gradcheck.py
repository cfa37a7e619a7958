"""Central-difference gradient checking, the numerical oracle for every backward rule."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import Tensor, branch_log
from .training import LOSSES

TOLERANCE = 1e-4


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


@dataclass
class GradCheckReport:
    max_relative_error: dict = field(default_factory=dict)  # parameter name -> worst coordinate
    failed: list = field(default_factory=list)  # (name, flat index, reason)
    epsilon: float = 1e-5
    tolerance: float = TOLERANCE
    checked: int = 0
    kinks_skipped: int = 0
    refined: int = 0  # coordinates re-measured in extended precision

    @property
    def worst(self):
        return max(self.max_relative_error.values(), default=0.0)

    @property
    def passed(self):
        return not self.failed and self.worst < self.tolerance

    def to_json(self):
        d = asdict(self)
        d["passed"] = self.passed
        d["worst"] = self.worst
        return json.dumps(d, indent=2, sort_keys=True)


def check_gradients(loss_fn, named_params, epsilon=1e-5, samples=50, seed=0, tolerance=TOLERANCE, oracle=None):
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    ``named_params`` is a sequence of (name, Parameter). Parameters with more
    than ``samples`` entries are checked on a random subset of coordinates.
    A coordinate whose perturbation flips a ReLU mask, clip mask or pooling
    argmax straddles a kink, where central differences are meaningless; it is
    skipped and replaced by another coordinate.

    ``oracle``, if given, is a (loss_fn, named_params) twin holding the same
    values at higher precision. With a float64 loss near 1, a perturbation of
    1e-5 against a gradient of 1e-9 moves the loss by only a few hundred ulps,
    so the float64 difference of such a coordinate is noise at the 1e-4 level.
    Any coordinate whose float64 difference misses the tolerance is therefore
    measured again on the twin, and the more accurate value is the one kept.
    """
    named_params = list(named_params)
    twin_params = dict(oracle[1]) if oracle is not None else {}
    report = GradCheckReport(epsilon=epsilon, tolerance=tolerance)
    if not named_params:
        return report
    for _, p in named_params:
        if p.data.dtype != np.float64:
            raise TypeError("gradient checks need double precision parameters")
        p.zero_grad()
    with branch_log() as base_branches:
        loss = loss_fn()
    base_branches = list(base_branches)
    loss.backward()
    grads = {name: p.grad.copy() for name, p in named_params}
    rng = np.random.default_rng(seed)

    def central_difference(fn, flat, i):
        """(difference quotient, finite, smooth) for coordinate ``i`` of ``flat``."""
        orig = flat[i]
        values, smooth = [], True
        for step in (epsilon, -epsilon):
            flat[i] = orig + step
            with branch_log() as branches:
                values.append(fn().data.item())
            smooth = smooth and branches == base_branches
        flat[i] = orig
        up, down = values
        finite = bool(np.isfinite(up) and np.isfinite(down))
        return float((up - down) / (2 * flat.dtype.type(epsilon))), finite, smooth

    for name, p in named_params:
        flat = p.data.reshape(-1)
        g = grads[name].reshape(-1)
        pending = list(rng.permutation(flat.size))
        worst, done = 0.0, 0
        while pending and done < samples:
            i = pending.pop()
            fd, finite, smooth = central_difference(loss_fn, flat, i)
            if not finite:
                report.failed.append((name, int(i), "non-finite loss under perturbation"))
                worst = float("inf")
                done += 1
                continue
            if not smooth:
                report.kinks_skipped += 1
                continue
            err = relative_error(float(g[i]), fd)
            if err >= tolerance and name in twin_params:
                fd, finite, smooth = central_difference(oracle[0], twin_params[name].data.reshape(-1), i)
                report.refined += 1
                if not smooth:
                    report.kinks_skipped += 1
                    continue
                err = relative_error(float(g[i]), fd) if finite else float("inf")
            worst = max(worst, err)
            done += 1
        report.checked += done
        report.max_relative_error[name] = worst
    for _, p in named_params:
        p.zero_grad()
    return report


def gradient_check(model, x, target, epsilon=1e-5, samples=50, seed=0, tolerance=TOLERANCE, extended=True):
    """Check every parameter of a built double-precision model on one batch.

    Backprop runs in float64. With ``extended`` the central differences are
    evaluated on a long-double copy of the model (same values, more bits).
    """
    loss = LOSSES[model.spec.loss]

    def make_loss_fn(m, dtype):
        xt = Tensor(np.asarray(x, dtype=dtype))
        t = np.asarray(target, dtype=dtype) if model.spec.loss == "mse" else target
        return lambda: loss(m(xt), t)

    oracle = None
    if extended and np.finfo(np.longdouble).eps < np.finfo(np.float64).eps:
        twin = type(model)(model.spec, dtype=np.float64)
        twin.load_state_dict(model.state_dict())
        twin.astype(np.longdouble)
        oracle = (make_loss_fn(twin, np.longdouble), list(twin.named_parameters()))
    return check_gradients(
        make_loss_fn(model, np.float64), model.named_parameters(), epsilon, samples, seed, tolerance, oracle
    )
