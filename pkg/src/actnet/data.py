"""Dataset ingestion: MNIST IDX and CIFAR-10 binary files, Gaussian corruption
for denoising, and seeded subset selection."""
import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}


@dataclass
class Dataset:
    """Images (N, C, H, W) in [0, 1] with class labels or target images."""

    images: np.ndarray
    targets: np.ndarray
    task: str = "classification"  # or "denoising"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.targets):
            raise ValueError(f"{len(self.images)} images but {len(self.targets)} targets")

    def __len__(self):
        return len(self.images)

    @property
    def n_classes(self):
        return int(self.targets.max()) + 1 if self.task == "classification" and len(self) else 0

    def take(self, idx):
        return Dataset(self.images[idx], self.targets[idx], self.task, dict(self.meta))


def _open(path):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_bytes(path):
    with _open(path) as f:
        return f.read()


def _resolve(directory, name):
    for candidate in (name, name + ".gz"):
        path = os.path.join(directory, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{name}[.gz] not found in {directory}")


# ---------------------------------------------------------------- IDX

def _parse_idx(raw, path, magic):
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header, {len(raw)} bytes (need at least 8 at offset 0)")
    found = struct.unpack(">i", raw[:4])[0]
    if found != magic:
        raise DataFormatError(f"{path}: bad magic number {found} at offset 0 (expected {magic})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header at byte offset {len(raw)} (need {header} bytes)")
    dims = struct.unpack(f">{ndim}i", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise DataFormatError(
            f"{path}: truncated payload at byte offset {len(raw)}; dimensions {dims} need {need} bytes"
        )
    if len(raw) > need:
        raise DataFormatError(f"{path}: {len(raw) - need} unexpected trailing bytes after offset {need}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def read_idx_images(path):
    return _parse_idx(_read_bytes(path), path, IDX_IMAGES_MAGIC)


def read_idx_labels(path):
    return _parse_idx(_read_bytes(path), path, IDX_LABELS_MAGIC)


def write_idx(path, array):
    """Write a uint8 array of rank 1 (labels) or 3 (images) in IDX format."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError(f"IDX writer handles rank 1 or 3 arrays, got rank {array.ndim}")
    payload = struct.pack(">i", magic) + struct.pack(f">{array.ndim}i", *array.shape) + array.tobytes()
    opener = gzip.open if os.fspath(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(payload)


def load_idx(images_path, labels_path):
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataFormatError(f"count mismatch: {images_path} holds {len(images)} images, {labels_path} {len(labels)} labels")
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataFormatError(f"{labels_path}: label {labels[bad]} > 9 at byte offset {8 + bad}")
    x = (images.astype(np.float32) / 255.0)[:, None]
    return Dataset(x, labels.astype(np.int64), "classification", {"source": os.fspath(images_path)})


def write_mnist_dir(directory, train_images, train_labels, test_images, test_labels):
    """Write uint8 (N, 28, 28) images and labels under the standard MNIST file names."""
    os.makedirs(directory, exist_ok=True)
    for split, (x, y) in {"train": (train_images, train_labels), "test": (test_images, test_labels)}.items():
        img, lab = MNIST_FILES[split]
        write_idx(os.path.join(directory, img), x)
        write_idx(os.path.join(directory, lab), y)


def load_mnist(directory, split="train"):
    img, lab = MNIST_FILES[split]
    return load_idx(_resolve(directory, img), _resolve(directory, lab))


# ---------------------------------------------------------------- CIFAR-10

def load_cifar10_bin(paths):
    """Read CIFAR-10 binary batches: per record one label byte then R, G, B planes."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        raw = _read_bytes(path)
        if not raw:
            raise DataFormatError(f"{path}: empty file")
        if len(raw) % CIFAR_RECORD:
            whole = len(raw) // CIFAR_RECORD * CIFAR_RECORD
            raise DataFormatError(
                f"{path}: short record at byte offset {whole}; file length {len(raw)} is not a multiple of {CIFAR_RECORD}"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lab = rec[:, 0]
        if lab.max() > 9:
            bad = int(np.argmax(lab > 9))
            raise DataFormatError(f"{path}: label {lab[bad]} > 9 at byte offset {bad * CIFAR_RECORD}")
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32))
        labels.append(lab)
    x = np.concatenate(images).astype(np.float32) / 255.0
    y = np.concatenate(labels).astype(np.int64)
    return Dataset(x, y, "classification", {"source": [os.fspath(p) for p in paths]})


def write_cifar10_bin(path, images, labels):
    images = np.ascontiguousarray(images, dtype=np.uint8).reshape(len(images), -1)
    if images.shape[1] != CIFAR_RECORD - 1:
        raise ValueError(f"CIFAR-10 records hold 3x32x32 images, got {images.shape[1]} bytes each")
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    with open(path, "wb") as f:
        f.write(np.hstack([labels, images]).tobytes())


def load_cifar10(directory, split="train"):
    return load_cifar10_bin([_resolve(directory, name) for name in CIFAR_FILES[split]])


# ---------------------------------------------------------------- transforms

def gaussian_noise(shape, variance, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(variance), size=shape)


def corrupt_gaussian(clean, variance, seed, clamp=True):
    """Noisy inputs paired with clean targets, for denoising."""
    if variance < 0:
        raise ValueError(f"noise variance must be non-negative, got {variance}")
    noisy = clean.images.astype(np.float64) + gaussian_noise(clean.images.shape, variance, seed)
    if clamp:
        noisy = np.clip(noisy, 0.0, 1.0)
    meta = dict(clean.meta, noise_variance=variance, noise_seed=seed, clamped=clamp)
    return Dataset(noisy.astype(clean.images.dtype), clean.images.copy(), "denoising", meta)


def subset(ds, n, seed=0):
    """``n`` samples: class-stratified for classification, the first ``n`` otherwise."""
    if n > len(ds):
        raise ValueError(f"requested {n} samples from a population of {len(ds)}")
    meta = dict(ds.meta, subset_n=n, subset_seed=seed)
    if n == len(ds):
        out = ds.take(np.arange(n))
    elif ds.task != "classification":
        out = ds.take(np.arange(n))
    else:
        rng = np.random.default_rng(seed)
        classes = np.unique(ds.targets)
        per, extra = divmod(n, len(classes))
        picked = []
        for i, c in enumerate(classes):
            pool = np.flatnonzero(ds.targets == c)
            want = per + (1 if i < extra else 0)
            if want > len(pool):
                raise ValueError(f"class {c} has only {len(pool)} samples, {want} requested")
            picked.append(rng.choice(pool, size=want, replace=False))
        out = ds.take(np.sort(np.concatenate(picked)))
    out.meta = meta
    return out
