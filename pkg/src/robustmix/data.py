"""Dataset ingestion, normalization, seeded batching and subsampling.

Images are stored channel-first as float32 in [0, 1]; labels are integer
class indices. All randomized operations are pure functions of
(input, seed) and therefore reproducible bit-for-bit.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .seeding import as_rng, derive_rng

CIFAR10_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILES = ["test_batch.bin"]
CIFAR10_RECORD_BYTES = 3073  # 1 label byte + 3 * 1024 pixel bytes
CIFAR10_RECORDS_PER_FILE = 10000

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataError(Exception):
    """Base class for dataset problems."""


class IngestionError(DataError):
    """A required input file is missing or unreadable."""


class FormatError(DataError):
    """An input file exists but violates its binary format."""


@dataclass
class LabeledExample:
    """One image/label pair; pixels in [0, 1], label a class index."""

    image: np.ndarray
    label: int


@dataclass
class Dataset:
    """Ordered collection of labeled images with a fixed class count."""

    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if len(self.images) == 0:
            raise ValueError("dataset must be nonempty")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels length mismatch")
        lo, hi = float(self.images.min()), float(self.images.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> LabeledExample:
        return LabeledExample(image=self.images[i], label=int(self.labels[i]))

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def take(self, indices) -> "Dataset":
        """New Dataset holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, self.split)


def _read_file(path: str) -> bytes:
    if not os.path.isfile(path):
        raise IngestionError(f"missing dataset file: {path}")
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IngestionError(f"cannot read dataset file {path}: {e}") from e


def _parse_cifar_file(path: str):
    raw = _read_file(path)
    expected = CIFAR10_RECORD_BYTES * CIFAR10_RECORDS_PER_FILE
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes "
            f"({CIFAR10_RECORDS_PER_FILE} records of {CIFAR10_RECORD_BYTES}), got {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return images, labels


def load_cifar10(path: str):
    """Load the CIFAR-10 binary batches under `path`.

    Returns (train, test) with 50000/10000 examples, pixels scaled
    to [0, 1]. Raises IngestionError for missing files, FormatError for
    size/record mismatches.
    """
    train_parts = [_parse_cifar_file(os.path.join(path, f)) for f in CIFAR10_TRAIN_FILES]
    test_parts = [_parse_cifar_file(os.path.join(path, f)) for f in CIFAR10_TEST_FILES]
    train = Dataset(
        np.concatenate([p[0] for p in train_parts]),
        np.concatenate([p[1] for p in train_parts]),
        num_classes=10,
        split="train",
    )
    test = Dataset(
        np.concatenate([p[0] for p in test_parts]),
        np.concatenate([p[1] for p in test_parts]),
        num_classes=10,
        split="test",
    )
    return train, test


def _parse_idx(path: str, expect_magic: int) -> np.ndarray:
    raw = _read_file(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expect_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}i", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for dims {dims}, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(dims)


def load_mnist(path: str):
    """Load MNIST IDX files under `path` into 1x28x28 datasets in [0, 1]."""

    def one_split(img_file, lbl_file, split):
        images = _parse_idx(os.path.join(path, img_file), IDX_IMAGE_MAGIC)
        labels = _parse_idx(os.path.join(path, lbl_file), IDX_LABEL_MAGIC)
        if len(images) != len(labels):
            raise FormatError(
                f"{img_file} has {len(images)} images but {lbl_file} has {len(labels)} labels"
            )
        images = images[:, None, :, :].astype(np.float32) / 255.0
        return Dataset(images, labels.astype(np.int64), num_classes=10, split=split)

    train = one_split(MNIST_FILES["train_images"], MNIST_FILES["train_labels"], "train")
    test = one_split(MNIST_FILES["test_images"], MNIST_FILES["test_labels"], "test")
    return train, test


def subsample(ds: Dataset, n_per_class: int, seed: int) -> Dataset:
    """Class-balanced random subset: exactly n_per_class examples per class.

    Deterministic for a fixed seed; output order is a seeded shuffle of the
    selected rows.
    """
    rng = derive_rng(seed, "subsample")
    picked = []
    for c in range(ds.num_classes):
        pool = np.flatnonzero(ds.labels == c)
        if len(pool) < n_per_class:
            raise ValueError(
                f"class {c} has only {len(pool)} examples, need {n_per_class}"
            )
        picked.append(rng.choice(pool, size=n_per_class, replace=False))
    idx = np.concatenate(picked)
    rng.shuffle(idx)
    return ds.take(idx)


def batches(ds: Dataset, batch_size: int, seed: int = 0, shuffle: bool = False):
    """Yield (images, labels) batches covering ds once.

    The last batch may be smaller. With shuffle=True the order is a seeded
    permutation; the same seed reproduces the same batch sequence.
    """
    if batch_size <= 0:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        order = derive_rng(seed, "batches").permutation(len(ds))
    else:
        order = np.arange(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        yield ds.images[idx], ds.labels[idx]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer labels -> rows of the probability simplex (float32)."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclass
class SyntheticSpec:
    """Knobs for the built-in class-template image generator."""

    num_classes: int = 10
    shape: tuple = (3, 32, 32)
    signal: float = 0.22      # amplitude of the class-specific pattern
    texture: float = 0.10     # amplitude of per-sample smooth nuisance texture
    noise: float = 0.04       # per-pixel gaussian noise
    jitter: int = 3           # max spatial shift of the class pattern, pixels
    template_sigma: float = 4.0
    texture_sigma: float = 1.5


def _class_templates(spec: SyntheticSpec, seed: int) -> np.ndarray:
    c, h, w = spec.shape
    out = np.empty((spec.num_classes, c, h, w), dtype=np.float32)
    for k in range(spec.num_classes):
        rng = derive_rng(seed, "template", k)
        t = gaussian_filter(
            rng.standard_normal((c, h, w)), sigma=(0, spec.template_sigma, spec.template_sigma)
        )
        out[k] = t / max(np.abs(t).max(), 1e-8)
    return out


def _synthesize_split(n: int, spec: SyntheticSpec, templates: np.ndarray, seed, split: str) -> Dataset:
    rng = as_rng(seed)
    c, h, w = spec.shape
    reps = -(-n // spec.num_classes)
    labels = np.tile(np.arange(spec.num_classes, dtype=np.int64), reps)[:n]
    rng.shuffle(labels)

    shifts = rng.integers(-spec.jitter, spec.jitter + 1, size=(n, 2))
    amps = rng.uniform(0.8, 1.2, size=(n, 1, 1, 1)).astype(np.float32)
    tex = rng.standard_normal((n, c, h, w), dtype=np.float32)
    tex = gaussian_filter(tex, sigma=(0, 0, spec.texture_sigma, spec.texture_sigma))
    tex /= np.maximum(np.abs(tex).max(axis=(1, 2, 3), keepdims=True), 1e-8)
    noise = rng.standard_normal((n, c, h, w), dtype=np.float32)

    images = np.empty((n, c, h, w), dtype=np.float32)
    for i in range(n):
        patt = np.roll(templates[labels[i]], tuple(shifts[i]), axis=(1, 2))
        images[i] = 0.5 + spec.signal * amps[i] * patt + spec.texture * tex[i] + spec.noise * noise[i]
    np.clip(images, 0.0, 1.0, out=images)
    return Dataset(images, labels, spec.num_classes, split)


def synthetic_dataset(n_train: int, n_test: int, seed: int, spec: SyntheticSpec = None):
    """Generate a (train, test) pair of synthetic template-plus-texture images.

    Classes share a global texture/noise model and differ by a smooth
    spatial template, so the data has a low-dimensional latent structure a
    small VAE can capture while remaining attackable at CIFAR-like budgets.
    """
    spec = spec or SyntheticSpec()
    templates = _class_templates(spec, seed)
    train = _synthesize_split(n_train, spec, templates, derive_rng(seed, "train"), "train")
    test = _synthesize_split(n_test, spec, templates, derive_rng(seed, "test"), "test")
    return train, test
