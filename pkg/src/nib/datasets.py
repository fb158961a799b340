"""Datasets: CIFAR-10 binary ingestion, Gaussian-blob synthesis, subsetting.

A LabeledDataset carries both the true and the observed (possibly corrupted)
labels plus per-sample flip flags, so selection quality can always be audited
against ground truth. Test splits are never corrupted.
"""

import csv
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 x 32 x 32 pixel planes
CIFAR_BATCH_RECORDS = 10000
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"


class IngestionError(RuntimeError):
    """Raised when a dataset file is missing or shorter than required."""


class FormatError(ValueError):
    """Raised when a dataset file does not match the expected binary layout."""


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray        # N x D or N x H x W x C, float32
    true_labels: np.ndarray     # N, int64
    observed_labels: np.ndarray # N, int64
    flip_mask: np.ndarray       # N, bool
    num_classes: int
    split_tag: str              # 'train' or 'test'

    def __post_init__(self):
        n = self.features.shape[0]
        for name in ("true_labels", "observed_labels", "flip_mask"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ValueError(f"{name} length {arr.shape[0]} != {n} samples")

    @property
    def n(self):
        return self.features.shape[0]

    def with_corruption(self, record):
        """Return a copy carrying the observed labels of a CorruptionRecord."""
        if self.split_tag == "test":
            raise ValueError("test splits are never corrupted")
        return replace(self, observed_labels=record.observed_labels.copy(),
                       flip_mask=record.flip_mask.copy())

    def fingerprint(self):
        """Content hash of features and true labels (pre-corruption identity)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.true_labels).tobytes())
        return h.hexdigest()


def _clean(features, labels, num_classes, split_tag):
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(features=features, true_labels=labels,
                          observed_labels=labels.copy(),
                          flip_mask=np.zeros(labels.shape[0], dtype=bool),
                          num_classes=num_classes, split_tag=split_tag)


def _read_cifar_file(path):
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except (FileNotFoundError, OSError) as exc:
        raise IngestionError(f"cannot read CIFAR-10 batch file {path}: {exc}") from exc
    if raw.size % CIFAR_RECORD_BYTES != 0:
        raise FormatError(f"{path}: {raw.size} bytes is not a multiple of "
                          f"{CIFAR_RECORD_BYTES}-byte records")
    if raw.size // CIFAR_RECORD_BYTES != CIFAR_BATCH_RECORDS:
        raise IngestionError(f"{path}: expected {CIFAR_BATCH_RECORDS} records, "
                             f"got {raw.size // CIFAR_RECORD_BYTES}")
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    # pixel payload is three 32x32 row-major color planes; store as H x W x C
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return pixels, labels


def load_cifar10(directory):
    """Load the six standard CIFAR-10 binary batches from `directory`.

    Returns (train, test) with pixel values scaled to [0, 1]. Standardization
    is a separate, explicit step (see `standardize`).
    """
    directory = Path(directory)
    train_pixels, train_labels = [], []
    for name in CIFAR_TRAIN_FILES:
        pixels, labels = _read_cifar_file(directory / name)
        train_pixels.append(pixels)
        train_labels.append(labels)
    test_pixels, test_labels = _read_cifar_file(directory / CIFAR_TEST_FILE)

    train_x = (np.concatenate(train_pixels).astype(np.float32)) / 255.0
    test_x = test_pixels.astype(np.float32) / 255.0
    train = _clean(train_x, np.concatenate(train_labels), 10, "train")
    test = _clean(test_x, test_labels, 10, "test")
    return train, test


def generate_blobs(num_classes, n_per_class, dim, center_spread, cluster_std, seed):
    """Sample K isotropic Gaussian clusters and split them 80/20 by class.

    Class overlap is governed by the center_spread / cluster_std ratio:
    centers are drawn as center_spread * standard normal, so identical
    centers (spread 0) give indistinguishable classes.
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if dim < 2:
        raise ValueError(f"need at least 2 feature dimensions, got {dim}")
    if cluster_std <= 0:
        raise ValueError(f"cluster_std must be positive, got {cluster_std}")
    if n_per_class < 5:
        raise ValueError(f"need at least 5 samples per class, got {n_per_class}")

    rng = np.random.default_rng([int(seed), 0xB10B])
    centers = rng.normal(size=(num_classes, dim)) * center_spread

    feats, labels = [], []
    for k in range(num_classes):
        feats.append(centers[k] + rng.normal(size=(n_per_class, dim)) * cluster_std)
        labels.append(np.full(n_per_class, k, dtype=np.int64))
    feats = np.concatenate(feats).astype(np.float32)
    labels = np.concatenate(labels)

    n_train = int(round(0.8 * n_per_class))
    train_idx, test_idx = [], []
    for k in range(num_classes):
        block = np.arange(k * n_per_class, (k + 1) * n_per_class)
        order = rng.permutation(n_per_class)
        train_idx.append(block[order[:n_train]])
        test_idx.append(block[order[n_train:]])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))

    train = _clean(feats[train_idx], labels[train_idx], num_classes, "train")
    test = _clean(feats[test_idx], labels[test_idx], num_classes, "test")
    return train, test


def subset_per_class(dataset, n_per_class, seed):
    """Keep exactly n_per_class samples of each true class, drawn without
    replacement from a dedicated seeded stream."""
    rng = np.random.default_rng([int(seed), 0x5B5E])
    picked = []
    for k in range(dataset.num_classes):
        pool = np.flatnonzero(dataset.true_labels == k)
        if pool.size < n_per_class:
            raise ValueError(f"class {k} has {pool.size} samples, "
                             f"need {n_per_class}")
        picked.append(rng.permutation(pool)[:n_per_class])
    idx = np.concatenate(picked)
    return replace(dataset,
                   features=dataset.features[idx],
                   true_labels=dataset.true_labels[idx],
                   observed_labels=dataset.observed_labels[idx],
                   flip_mask=dataset.flip_mask[idx])


def standardize(train, test):
    """Shift/scale features to zero mean, unit variance per channel (images)
    or per feature (flat data), with constants computed on the train split only.

    Returns (train, test, mean, std); mean/std are recorded in run manifests.
    """
    x = train.features
    if x.ndim == 4:
        axes = (0, 1, 2)
    elif x.ndim == 2:
        axes = (0,)
    else:
        raise ValueError(f"unsupported feature rank {x.ndim}")
    mean = x.mean(axis=axes, dtype=np.float64)
    std = x.std(axis=axes, dtype=np.float64)
    std = np.where(std < 1e-12, 1.0, std)

    def apply(ds):
        feats = ((ds.features - mean.astype(np.float32))
                 / std.astype(np.float32)).astype(np.float32)
        return replace(ds, features=feats)

    return apply(train), apply(test), mean, std


@dataclass(frozen=True)
class BatchPlan:
    """One epoch's shuffle: a permutation cut into consecutive batches."""

    permutation: np.ndarray
    batch_size: int
    n_iterations: int

    def batches(self):
        for j in range(self.n_iterations):
            yield self.permutation[j * self.batch_size:(j + 1) * self.batch_size]


def make_batch_plan(n_samples, batch_size, seed, epoch):
    """Deterministic shuffle for (seed, epoch); last batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([int(seed), int(epoch), 0x5F1E])
    perm = rng.permutation(n_samples)
    n_iter = -(-n_samples // batch_size)
    return BatchPlan(permutation=perm, batch_size=int(batch_size),
                     n_iterations=int(n_iter))


def export_csv(dataset, path):
    """Write a flat-feature dataset as index,true_label,observed_label,flipped,f_*."""
    if dataset.features.ndim != 2:
        raise ValueError("CSV export supports flat feature vectors only")
    dim = dataset.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "true_label", "observed_label", "flipped"]
                        + [f"f_{d}" for d in range(dim)])
        for i in range(dataset.n):
            writer.writerow([i, int(dataset.true_labels[i]),
                             int(dataset.observed_labels[i]),
                             int(dataset.flip_mask[i])]
                            + [repr(float(v)) for v in dataset.features[i]])
