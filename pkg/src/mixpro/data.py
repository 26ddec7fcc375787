"""Datasets: CIFAR-10 binary batches and a procedural class-conditional image set."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CIFAR_RECORD = 1 + 3 * 32 * 32
SYNTH_MEAN = (0.5, 0.5, 0.5)
SYNTH_STD = (0.25, 0.25, 0.25)


class FormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray          # [n, C, H, W], normalised
    labels: np.ndarray          # [n] int64
    num_classes: int
    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, self.mean, self.std)

    def denormalize(self, images: np.ndarray) -> np.ndarray:
        """Back to [0, 1] pixel scale (unclamped)."""
        m = np.asarray(self.mean).reshape(-1, 1, 1)
        s = np.asarray(self.std).reshape(-1, 1, 1)
        return images * s + m


def normalize(pixels: np.ndarray, mean: Sequence[float], std: Sequence[float]) -> np.ndarray:
    """Per-channel ``(x - mean) / std`` on [n, C, H, W] arrays already scaled to [0, 1]."""
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    return (pixels - m) / s


def read_cifar10_raw(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse one CIFAR-10 binary file into uint8 images [n, 3, 32, 32] and labels."""
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        whole = len(raw) // CIFAR_RECORD * CIFAR_RECORD
        raise FormatError(f"{path}: truncated record at byte offset {whole} "
                          f"(file is {len(raw)} bytes, records are {CIFAR_RECORD})")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{path}: label {labels[i]} out of range 0-9 at byte offset "
                          f"{i * CIFAR_RECORD}")
    return rec[:, 1:].reshape(-1, 3, 32, 32).copy(), labels


def write_cifar10(path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images)
    if images.dtype != np.uint8 or images.shape[1:] != (3, 32, 32):
        raise ValueError("expected uint8 images of shape [n, 3, 32, 32]")
    rec = np.empty((len(images), CIFAR_RECORD), dtype=np.uint8)
    rec[:, 0] = np.asarray(labels, dtype=np.uint8)
    rec[:, 1:] = images.reshape(len(images), -1)
    Path(path).write_bytes(rec.tobytes())


def load_cifar10(paths, mean: Sequence[float], std: Sequence[float]) -> Dataset:
    """Load one or more CIFAR-10 binary files; pixels scaled to [0, 1] then normalised."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    parts = [read_cifar10_raw(p) for p in paths]
    pixels = np.concatenate([p[0] for p in parts]).astype(np.float64) / 255.0
    labels = np.concatenate([p[1] for p in parts])
    return Dataset(normalize(pixels, mean, std), labels, 10, tuple(mean), tuple(std))


def synth_pixels(seed: int, n_per_class: int, num_classes: int, size: int = 32,
                 channels: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Class-conditional oriented gratings in [0, 1], shape [n, C, size, size].

    Each class owns an orientation, a spatial frequency and a colour balance;
    phase, contrast jitter and pixel noise are random per image.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    n_orient = math.ceil(num_classes / 2)
    yy, xx = np.mgrid[0:size, 0:size] / size
    # fixed class palette, independent of the data seed
    palette = np.random.default_rng(12345).uniform(0.4, 1.0, size=(num_classes, channels))
    offsets = np.random.default_rng(54321).uniform(-0.025, 0.025, size=(num_classes, channels))
    images, labels = [], []
    for c in range(num_classes):
        theta = math.pi * (c % n_orient) / n_orient
        freq = 2.0 if c < n_orient else 4.0
        u = xx * math.cos(theta) + yy * math.sin(theta)
        phase = rng.uniform(0, 2 * math.pi, size=(n_per_class, 1, 1))
        wave = np.sin(2 * math.pi * freq * u[None] + phase)              # [n, H, W]
        contrast = rng.uniform(0.07, 0.16, size=(n_per_class, 1, 1, 1))
        img = 0.5 + offsets[c][None, :, None, None] \
            + contrast * palette[c][None, :, None, None] * wave[:, None]
        img = img + rng.normal(0.0, 0.25, size=img.shape)
        images.append(np.clip(img, 0.0, 1.0))
        labels.append(np.full(n_per_class, c, dtype=np.int64))
    return np.concatenate(images), np.concatenate(labels)


def synth_dataset(seed: int, n_per_class: int, num_classes: int = 10, size: int = 32,
                  channels: int = 3, mean: Sequence[float] = SYNTH_MEAN,
                  std: Sequence[float] = SYNTH_STD) -> Dataset:
    pixels, labels = synth_pixels(seed, n_per_class, num_classes, size, channels)
    return Dataset(normalize(pixels, mean[:channels], std[:channels]), labels, num_classes,
                   tuple(mean[:channels]), tuple(std[:channels]))


def split_dataset(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/validation split, deterministic from ``seed``."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in range(ds.num_classes):
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        k = int(round(len(idx) * val_fraction))
        val_idx.append(idx[:k])
        train_idx.append(idx[k:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return ds.subset(train_idx), ds.subset(val_idx)


def nearest_centroid_accuracy(train: Dataset, test: Dataset) -> float:
    """Raw-pixel nearest-centroid classifier; a separability sanity check."""
    xtr = train.images.reshape(len(train), -1)
    xte = test.images.reshape(len(test), -1)
    cents = np.stack([xtr[train.labels == c].mean(axis=0) for c in range(train.num_classes)])
    d = ((xte[:, None, :] - cents[None]) ** 2).sum(axis=-1)
    return float(np.mean(d.argmin(axis=1) == test.labels))
