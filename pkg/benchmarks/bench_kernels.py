"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--dtype float32]

Prints per-kernel timings for both backends and one forward/backward pass of
the activation-net presets.
"""
import argparse
import timeit

import numpy as np

from actnet import kernels, ops
from actnet.autograd import Tensor
from actnet.models import build, preset


def kernel_cases(dtype, rng):
    x = rng.normal(size=(32, 16, 28, 28)).astype(dtype)
    cols = kernels.im2col(x, 3, 3, 1, 1)
    pooled, idx = kernels.maxpool2_forward(x)
    a = rng.normal(size=(32, 6, 16, 28 * 28)).astype(dtype)
    u = rng.normal(size=(32, 16, 28 * 28)).astype(dtype)
    return {
        "im2col 32x16x28x28, 3x3": lambda: kernels.im2col(x, 3, 3, 1, 1),
        "col2im (adjoint)": lambda: kernels.col2im(cols, x.shape, 3, 3, 1, 1),
        "maxpool2 forward": lambda: kernels.maxpool2_forward(x),
        "maxpool2 backward": lambda: kernels.maxpool2_backward(pooled, idx, x.shape),
        "poly forward, K=5": lambda: kernels.poly_forward(a, u),
        "poly backward, K=5": lambda: kernels.poly_backward(u, a, u),
        "box_sum radius 1": lambda: kernels.box_sum(x, 1),
    }


def model_cases(dtype, rng):
    cases = {}
    for name in ("mini_lenet", "mini_unet"):
        model = build(preset(name, "activation_net"), seed=0, dtype=dtype)
        x = Tensor(rng.uniform(size=(32, 1, 28, 28)).astype(dtype))
        if name == "mini_lenet":
            target = rng.integers(0, 10, 32)
            loss = lambda m=model, x=x, t=target: ops.softmax_xent(m(x), t)
        else:
            target = rng.uniform(size=(32, 1, 28, 28)).astype(dtype)
            loss = lambda m=model, x=x, t=target: ops.mse(m(x), t)

        def step(loss=loss, model=model):
            loss().backward()
            model.zero_grad()

        cases[f"{name} AN train step, batch 32"] = step
    return cases


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    args = ap.parse_args()
    dtype = np.dtype(args.dtype)
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    start = kernels.BACKEND
    rows = {}
    try:
        for backend in backends:
            kernels.use_backend(backend)
            cases = {**kernel_cases(dtype, rng), **model_cases(dtype, rng)}
            for label, fn in cases.items():
                fn()  # warm up
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                rows.setdefault(label, {})[backend] = best
    finally:
        kernels.use_backend(start)
    header = f"{'case':40s}" + "".join(f"{b:>12s}" for b in backends) + ("    speedup" if len(backends) > 1 else "")
    print(f"dtype {dtype}, best of {args.repeat}, milliseconds")
    print(header)
    for label, t in rows.items():
        line = f"{label:40s}" + "".join(f"{1e3 * t[b]:12.3f}" for b in backends)
        if len(backends) > 1:
            line += f"{t['python'] / t['c']:10.2f}x"
        print(line)


if __name__ == "__main__":
    main()
