"""Tiny on-disk dataset fixtures, well-formed and malformed."""
import os
import struct

import numpy as np

from actnet.data import CIFAR_FILES, CIFAR_RECORD, MNIST_FILES, write_cifar10_bin, write_mnist_dir


def make_mnist(directory, n_train=20, n_test=10, seed=0):
    r = np.random.default_rng(seed)
    x = r.integers(0, 256, size=(n_train + n_test, 28, 28), dtype=np.uint8)
    y = (np.arange(n_train + n_test) % 10).astype(np.uint8)
    write_mnist_dir(directory, x[:n_train], y[:n_train], x[n_train:], y[n_train:])
    return x, y


def make_cifar(directory, per_file=4, seed=0):
    os.makedirs(directory, exist_ok=True)
    r = np.random.default_rng(seed)
    for name in CIFAR_FILES["train"] + CIFAR_FILES["test"]:
        x = r.integers(0, 256, size=(per_file, 3, 32, 32), dtype=np.uint8)
        write_cifar10_bin(os.path.join(directory, name), x, np.arange(per_file) % 10)


def _overwrite(path, raw):
    with open(path, "wb") as f:
        f.write(raw)


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def malformed(kind, directory):
    """Build a dataset directory whose training files carry one defect.

    Returns the dataset name the directory should be loaded as.
    """
    if kind in ("short_record", "empty_file"):
        make_cifar(directory)
        path = os.path.join(directory, CIFAR_FILES["train"][0])
        _overwrite(path, b"" if kind == "empty_file" else _read(path)[: CIFAR_RECORD + 100])
        return "cifar10"
    make_mnist(directory)
    images = os.path.join(directory, MNIST_FILES["train"][0])
    labels = os.path.join(directory, MNIST_FILES["train"][1])
    if kind == "bad_magic":
        _overwrite(images, struct.pack(">i", 2050) + _read(images)[4:])
    elif kind == "truncation":
        _overwrite(images, _read(images)[:-5])
    elif kind == "count_mismatch":
        raw = _read(labels)
        _overwrite(labels, struct.pack(">ii", 2049, 19) + raw[8:-1])
    elif kind == "oversized_label":
        raw = bytearray(_read(labels))
        raw[8 + 3] = 12
        _overwrite(labels, bytes(raw))
    else:
        raise ValueError(kind)
    return "mnist"


MALFORMED = ("bad_magic", "truncation", "count_mismatch", "oversized_label", "short_record", "empty_file")
