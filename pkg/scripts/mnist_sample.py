"""Write a small MNIST in IDX format from the 5,000-digit sample bundled with mlxtend.

    python3 scripts/mnist_sample.py OUT_DIR [--n-test 1000] [--seed 0]

The sample holds 500 digits per class. A class-stratified, seeded split gives
the train and test files.
"""
import argparse

import numpy as np

from actnet.data import write_mnist_dir


def build(out_dir, n_test=1000, seed=0):
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    x = np.rint(x).astype(np.uint8).reshape(-1, 28, 28)
    y = y.astype(np.uint8)
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    per = n_test // len(classes)
    test = np.concatenate([rng.permutation(np.flatnonzero(y == c))[:per] for c in classes])
    train = np.setdiff1d(np.arange(len(y)), test)
    train, test = rng.permutation(train), rng.permutation(test)
    write_mnist_dir(out_dir, x[train], y[train], x[test], y[test])
    return len(train), len(test)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    n_train, n_test = build(args.out_dir, args.n_test, args.seed)
    print(f"wrote {n_train} training and {n_test} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
