"""Experiment harness.

    actnet train      --preset mini_lenet --variant activation_net --dataset mnist --out runs/an
    actnet compare    --preset mini_unet --dataset mnist --out runs/unet
    actnet gradcheck  --preset all --variant all --out runs/gradcheck.json
    actnet dump-activations --snapshot runs/an/model.npz --layer conv1 --grid -2:2:41 --out curves.csv

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence,
5 gradient check failure.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import data as dataio
from .activation_net import ANConfig, dump_activation_shapes
from .errors import DataFormatError, SpecError
from .gradcheck import gradient_check
from .models import PRESETS, VARIANTS, build, dumps_spec, load_spec, loads_spec, preset
from .training import TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4, 5
DATA_DIR_ENV = "ACTNET_DATA_DIR"
DATASETS = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}
COMPARE_COLUMNS = ["variant", "params", "param_ratio", "final_train_loss", "final_val_loss", "test_metric", "status"]

log = logging.getLogger("actnet")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _an_config(args):
    kw = {}
    if getattr(args, "an_mode", None):
        kw["mode"] = args.an_mode
    if getattr(args, "an_order", None):
        kw["order"] = args.an_order
    if getattr(args, "an_clip", None) is not None:
        kw["u_clip"] = None if args.an_clip <= 0 else args.an_clip
    return ANConfig(**kw) if kw else None


def _spec_from_args(args, variant=None):
    if getattr(args, "model_file", None):
        return load_spec(args.model_file)
    if not args.preset:
        raise ConfigError("give --model-file or --preset")
    shape = DATASETS.get(getattr(args, "dataset", None) or "mnist")
    an = _an_config(args)
    spec = preset(args.preset, variant or args.variant, input_shape=shape, an=an)
    return spec


def _load_data(args, spec):
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise DataError(f"no data directory; pass --data-dir or set {DATA_DIR_ENV}")
    loader = dataio.load_mnist if args.dataset == "mnist" else dataio.load_cifar10
    try:
        tr = loader(data_dir, "train")
        te = loader(data_dir, "test")
    except (OSError, DataFormatError) as exc:
        raise DataError(str(exc)) from None
    if tuple(tr.images.shape[1:]) != tuple(spec.input_shape):
        raise ConfigError(f"model expects input {spec.input_shape}, {args.dataset} images are {tr.images.shape[1:]}")
    try:
        if args.n_train:
            tr = dataio.subset(tr, args.n_train, args.seed)
        if args.n_test:
            te = dataio.subset(te, args.n_test, args.seed)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if spec.loss == "mse":
        # distinct, seed-derived noise fields for train and test
        tr = dataio.corrupt_gaussian(tr, args.noise_variance, [args.seed, 0])
        te = dataio.corrupt_gaussian(te, args.noise_variance, [args.seed, 1])
    return tr, te


def _train_config(args):
    try:
        return TrainConfig(
            lr=args.lr,
            momentum=args.momentum,
            epochs=args.epochs,
            batch_size=args.batch,
            seed=args.seed,
            precision=args.precision,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def save_snapshot(path, model, meta):
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    np.savez(
        path,
        __spec__=np.array(dumps_spec(model.spec)),
        __meta__=np.array(json.dumps(meta, sort_keys=True, default=str)),
        **arrays,
    )


def load_snapshot(path):
    with np.load(path, allow_pickle=False) as z:
        spec = loads_spec(str(z["__spec__"]))
        meta = json.loads(str(z["__meta__"]))
        state = {k[len("param/") :]: z[k] for k in z.files if k.startswith("param/")}
    model = build(spec)
    model.load_state_dict(state)
    return model, meta


def _run_one(spec, args, tr, te, out_dir):
    cfg = _train_config(args)
    model = build(spec, seed=args.seed)
    log.info("%s: %d parameters", spec.name, model.num_parameters())
    record = train(model, tr, cfg, te)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run.json"), "w") as f:
        f.write(record.to_json())
    with open(os.path.join(out_dir, "losses.csv"), "w", newline="") as f:
        f.write(record.losses_csv())
    with open(os.path.join(out_dir, "model.ini"), "w") as f:
        f.write(dumps_spec(spec))
    meta = {
        "dataset": args.dataset,
        "noise_variance": args.noise_variance if spec.loss == "mse" else None,
        "seed": args.seed,
        "n_train": args.n_train,
        "n_test": args.n_test,
    }
    save_snapshot(os.path.join(out_dir, "model.npz"), model, meta)
    return model, record


# ---------------------------------------------------------------- commands

def cmd_train(args):
    spec = _spec_from_args(args)
    tr, te = _load_data(args, spec)
    _, record = _run_one(spec, args, tr, te, args.out)
    if record.diverged:
        log.error("training diverged: %s", record.divergence)
        return EXIT_DIVERGED
    print(f"{spec.name}: final train loss {record.final_train_loss:.5f}, test {record.metric_name} {record.test_metric:.5f}")
    return EXIT_OK


def cmd_compare(args):
    base_spec = _spec_from_args(args, "relu")
    tr, te = _load_data(args, base_spec)
    rows = []
    baseline_params = None
    for variant in VARIANTS:
        spec = preset(args.preset, variant, input_shape=base_spec.input_shape, an=_an_config(args))
        params = spec.parameter_count()
        if variant == "relu":
            baseline_params = params
        row = {"variant": variant, "params": params}
        try:
            _, record = _run_one(spec, args, tr, te, os.path.join(args.out, variant))
            row.update(
                final_train_loss=record.final_train_loss,
                final_val_loss=record.final_val_loss,
                test_metric=record.test_metric,
                status="diverged" if record.diverged else "ok",
            )
        except Exception as exc:  # a failed variant must not sink the table
            log.exception("variant %s failed", variant)
            row.update(final_train_loss="", final_val_loss="", test_metric="", status=f"error: {exc}")
        rows.append(row)
    for row in rows:
        row["param_ratio"] = f"{100.0 * row['params'] / baseline_params:.1f}%"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "compare.csv"), "w", newline="") as f:
        w = csv.DictWriter(f, COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    for row in rows:
        print(f"{row['variant']:15s} {row['params']:8d} {row['param_ratio']:>8s}  {row['status']}")
    return EXIT_OK


def gradcheck_grid(presets, variants, seed=0, samples=20, epsilon=1e-5, batch=2):
    """Gradient-check every preset x variant (both activation-net modes). Returns {label: report}."""
    reports = {}
    for name in presets:
        for variant in variants:
            modes = ("full", "shared") if variant == "activation_net" else (None,)
            for mode in modes:
                an = ANConfig(mode=mode) if mode else None
                spec = preset(name, variant, an=an)
                label = f"{name}/{variant}" + (f"/{mode}" if mode else "")
                reports[label] = gradcheck_spec(spec, seed, samples, epsilon, batch)
    return reports


def gradcheck_spec(spec, seed=0, samples=20, epsilon=1e-5, batch=2, jitter=0.01):
    """Check a model description at a random point near its initialization, on image-like input."""
    rng = np.random.default_rng(seed)
    model = build(spec, seed=seed, dtype=np.float64)
    # move off the exact initialization so zero-initialized weights are exercised too
    for p in model.parameters():
        p.data += jitter * rng.normal(size=p.shape)
    x = rng.uniform(size=(batch,) + tuple(spec.input_shape))
    if spec.loss == "mse":
        target = rng.uniform(size=(batch,) + tuple(spec.output_shape()))
    else:
        target = rng.integers(0, spec.output_shape()[0], size=batch)
    return gradient_check(model, x, target, epsilon=epsilon, samples=samples, seed=seed)


def cmd_gradcheck(args):
    if args.model_file:
        reports = {load_spec(args.model_file).name: gradcheck_spec(load_spec(args.model_file), args.seed, args.samples)}
    else:
        presets = sorted(PRESETS) if args.preset == "all" else [args.preset]
        variants = list(VARIANTS) if args.variant == "all" else [args.variant]
        for p in presets:
            if p not in PRESETS:
                raise ConfigError(f"unknown preset {p!r}")
        reports = gradcheck_grid(presets, variants, args.seed, args.samples)
    summary = {label: json.loads(r.to_json()) for label, r in reports.items()}
    ok = all(r.passed for r in reports.values())
    for label, r in reports.items():
        print(f"{'PASS' if r.passed else 'FAIL'} {label:40s} worst {r.worst:.2e} ({r.checked} coords, {r.kinks_skipped} kinks skipped)")
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as f:
            json.dump({"passed": ok, "reports": summary}, f, indent=2, sort_keys=True)
    return EXIT_OK if ok else EXIT_GRADCHECK


def _parse_grid(text):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"malformed grid {text!r}; expected lo:hi:n") from None
    if n < 2 or not hi > lo:
        raise ConfigError(f"malformed grid {text!r}; need hi > lo and n >= 2")
    return np.linspace(lo, hi, n)


def cmd_dump_activations(args):
    grid = _parse_grid(args.grid)
    try:
        model, meta = load_snapshot(args.snapshot)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {args.snapshot}: {exc}") from None
    nets = model.activation_nets()
    if args.layer not in nets:
        raise ConfigError(f"layer {args.layer!r} has no activation network; choose from {sorted(nets)}")
    an = nets[args.layer]
    x = _dump_input(args, model, meta)
    capture = {}
    model(x[None], capture=capture)
    u = capture[args.layer].data[0]
    if u.ndim == 1:
        sites = range(an.n_nodes)
    else:
        c, h, w = u.shape
        pixels = args.pixel or [(h // 2, w // 2)]
        sites = [(ch, r, col) for ch in range(c) for r, col in pixels]
    try:
        rows = dump_activation_shapes(an, u, sites, grid, layer=args.layer)
    except IndexError as exc:
        raise ConfigError(str(exc)) from None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["layer", "node", "pixel_row", "pixel_col", "u_grid", "activation_value"])
        for row in rows:
            w.writerow([row[0], row[1], row[2], row[3], repr(row[4]), repr(row[5])])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _dump_input(args, model, meta):
    if args.random_input:
        return np.random.default_rng(args.input_index).uniform(size=model.spec.input_shape).astype(model.dtype)
    ns = argparse.Namespace(
        dataset=args.dataset or meta.get("dataset", "mnist"),
        data_dir=args.data_dir,
        n_train=None,
        n_test=None,
        seed=meta.get("seed", 0),
        noise_variance=meta.get("noise_variance") or 0.05,
    )
    _, te = _load_data(ns, model.spec)
    if not 0 <= args.input_index < len(te):
        raise ConfigError(f"--input-index {args.input_index} outside [0, {len(te)})")
    return te.images[args.input_index].astype(model.dtype)


# ---------------------------------------------------------------- parser

def _pixel(text):
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pixel must be ROW,COL, got {text!r}") from None
    return r, c


def _add_model_args(p, allow_all=False):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model-file", help="declarative model description (INI-style)")
    choices = sorted(PRESETS) + (["all"] if allow_all else [])
    g.add_argument("--preset", choices=choices)
    p.add_argument("--variant", default="activation_net", choices=list(VARIANTS) + (["all"] if allow_all else []))
    p.add_argument("--an-mode", choices=["full", "shared"])
    p.add_argument("--an-order", type=int)
    p.add_argument("--an-clip", type=float, help="clamp bound on u before powering; 0 disables")


def _add_training_args(p):
    p.add_argument("--dataset", default="mnist", choices=sorted(DATASETS))
    p.add_argument("--data-dir", help=f"dataset directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--n-train", type=int, help="class-stratified training subset size")
    p.add_argument("--n-test", type=int, help="test subset size")
    p.add_argument("--noise-variance", type=float, default=0.05, help="Gaussian noise for denoising models")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", default="single", choices=["single", "double"])
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="actnet", description="Neural networks with activation networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_model_args(p)
    _add_training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train all five activation variants with one budget")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--an-mode", choices=["full", "shared"])
    p.add_argument("--an-order", type=int)
    p.add_argument("--an-clip", type=float)
    _add_training_args(p)
    p.set_defaults(func=cmd_compare, model_file=None, variant="relu")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter gradient")
    _add_model_args(p, allow_all=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=20, help="coordinates checked per parameter tensor")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-activations", help="write the polynomial curves an activation net applies")
    p.add_argument("--snapshot", required=True, help="model.npz written by train")
    p.add_argument("--layer", required=True)
    p.add_argument("--input-index", type=int, default=0)
    p.add_argument("--grid", default="-2:2:41", help="lo:hi:n abscissae")
    p.add_argument("--pixel", type=_pixel, action="append", help="ROW,COL for conv layers (repeatable)")
    p.add_argument("--dataset", choices=sorted(DATASETS))
    p.add_argument("--data-dir")
    p.add_argument("--random-input", action="store_true", help="use a seeded uniform input instead of test data")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_dump_activations)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, SpecError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
