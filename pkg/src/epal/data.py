"""Dataset ingestion, deterministic splitting, synthetic data, and the label oracle.

Images are stored as one contiguous (N, 3, 32, 32) array per dataset with
values in [0, 1], labels as an (N,) integer array. `Dataset` is an
immutable-by-convention container over the two; indexing yields a
`LabeledImage` view for per-record access.

The binary image file format is record-oriented: each record is 3073 bytes,
one label byte (0..9) followed by 1024 red, 1024 green and 1024 blue plane
bytes of a 32x32 image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .rng import RngStream

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray      # (3, 32, 32), values in [0, 1]
    label: int


class Dataset:
    """Parallel (images, labels) arrays with list-like record access."""

    def __init__(self, images: np.ndarray, labels: np.ndarray):
        images = np.asarray(images)
        labels = np.asarray(labels, dtype=np.int64)
        if len(images) != len(labels):
            raise ValueError(f"{len(images)} images but {len(labels)} labels")
        self.images = images
        self.labels = labels

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices])

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.images.astype(dtype), self.labels)


class Oracle:
    """Ground-truth label lookup standing in for a human annotator.

    Total over the pool it was built from: every queried id gets exactly
    the dataset's label.
    """

    def __init__(self, labels: np.ndarray):
        self._labels = np.asarray(labels, dtype=np.int64)

    def lookup(self, indices) -> np.ndarray:
        return self._labels[np.asarray(indices, dtype=np.int64)]


# ---------------------------------------------------------------------------
# Binary loader / writer
# ---------------------------------------------------------------------------

def load_cifar10(path, dtype=np.float64) -> Dataset:
    """Load one binary batch file of 3073-byte records.

    Pixels are scaled to [0, 1] by dividing by 255; record order is
    preserved. Truncated files and label bytes above 9 are rejected.
    """
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % RECORD_BYTES:
        offset = (raw.size // RECORD_BYTES) * RECORD_BYTES
        raise ValueError(
            f"{path}: truncated record at byte offset {offset} "
            f"(file has {raw.size} bytes, records are {RECORD_BYTES})"
        )
    n = raw.size // RECORD_BYTES
    if n == 0:
        return Dataset(np.zeros((0, *IMAGE_SHAPE), dtype=dtype), np.zeros(0, dtype=np.int64))
    records = raw.reshape(n, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise ValueError(
            f"{path}: label byte {labels[bad[0]]} > 9 in record {bad[0]} "
            f"(byte offset {bad[0] * RECORD_BYTES})"
        )
    images = records[:, 1:].reshape(n, *IMAGE_SHAPE).astype(dtype) / 255.0
    return Dataset(images, labels)


def save_cifar10(dataset: Dataset, path) -> None:
    """Write a dataset back to the binary record format (inverse of the loader)."""
    n = len(dataset)
    records = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = dataset.labels
    pixels = np.rint(dataset.images * 255.0).clip(0, 255).astype(np.uint8)
    records[:, 1:] = pixels.reshape(n, -1)
    records.tofile(path)


def load_cifar10_dir(directory, dtype=np.float64) -> tuple[Dataset, Dataset]:
    """Load the standard five training batches plus the test batch."""
    train_parts = [
        load_cifar10(os.path.join(directory, f"data_batch_{i}.bin"), dtype)
        for i in range(1, 6)
    ]
    train = Dataset(
        np.concatenate([p.images for p in train_parts]),
        np.concatenate([p.labels for p in train_parts]),
    )
    test = load_cifar10(os.path.join(directory, "test_batch.bin"), dtype)
    return train, test


# ---------------------------------------------------------------------------
# Split planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    """Disjoint index sets: the initial training split, the ordered episode
    splits, and (optionally) a held-out test block carved from the same pool."""

    initial: np.ndarray
    episodes: tuple[np.ndarray, ...]
    test: np.ndarray

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    @property
    def train_pool_size(self) -> int:
        return len(self.initial) + sum(len(e) for e in self.episodes)

    def truncated(self, k: int) -> "SplitPlan":
        """The same plan stopped after k episodes."""
        return SplitPlan(self.initial, self.episodes[:k], self.test)


def make_split_plan(n_total: int, n_splits: int, seed: int, n_test: int = 0) -> SplitPlan:
    """Seeded uniform shuffle of 0..n_total-1, then contiguous partition.

    The first ``n_test`` shuffled indices become the test block; the rest
    must divide evenly into ``n_splits`` equal splits. Split 0 is the
    initial training set; splits 1.. are the episodes in order.
    """
    if n_splits < 2:
        raise ValueError("need at least 2 splits (initial + 1 episode)")
    pool = n_total - n_test
    if pool <= 0 or pool % n_splits:
        raise ValueError(
            f"cannot split {n_total} - {n_test} test = {pool} items into {n_splits} equal splits"
        )
    perm = RngStream(seed).generator().permutation(n_total)
    test = perm[:n_test]
    per = pool // n_splits
    splits = [perm[n_test + i * per : n_test + (i + 1) * per] for i in range(n_splits)]
    return SplitPlan(splits[0], tuple(splits[1:]), test)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def make_synthetic(
    classes: int = 10,
    per_class: int = 10,
    seed: int = 0,
    noise: float = 0.25,
    dtype=np.float64,
) -> Dataset:
    """Class-conditional Gaussian blobs rendered as 3x32x32 images.

    Each class gets a smooth random mean pattern (drawn at 8x8 per channel
    and upsampled) and samples are pattern + seeded pixel noise, clipped to
    [0, 1]. At noise=0 all images of a class are identical and the classes
    are trivially separable.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    stream = RngStream(seed)
    pat_gen = stream.child(0).generator()
    coarse = pat_gen.uniform(0.25, 0.75, size=(classes, 3, 8, 8))
    patterns = np.kron(coarse, np.ones((1, 1, 4, 4)))      # (classes, 3, 32, 32)

    images = np.empty((classes * per_class, *IMAGE_SHAPE), dtype=np.float64)
    labels = np.empty(classes * per_class, dtype=np.int64)
    for c in range(classes):
        block = slice(c * per_class, (c + 1) * per_class)
        samples = patterns[c][None]
        if noise > 0.0:
            noise_gen = stream.child(1, c).generator()
            samples = samples + noise * noise_gen.standard_normal((per_class, *IMAGE_SHAPE))
        else:
            samples = np.repeat(samples, per_class, axis=0)
        images[block] = np.clip(samples, 0.0, 1.0)
        labels[block] = c
    return Dataset(images.astype(dtype), labels)
