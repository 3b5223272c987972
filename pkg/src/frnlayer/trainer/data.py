"""Datasets for the desk-scale harness: a self-contained synthetic problem
and a loader for IDX-format image/label files."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..tensor import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """An IDX file failed to parse; the message carries the byte offset."""


@dataclass
class Dataset:
    images: np.ndarray  # (n, H, W, 1) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int

    def __len__(self) -> int:
        return self.images.shape[0]


def synthetic_dataset(seed: int, train_count: int = 2048, eval_count: int = 512,
                      side: int = 16, num_classes: int = 4,
                      noise_std: float = 0.3) -> tuple[Dataset, Dataset]:
    """Deterministic 4-class toy problem: each class is a linear intensity
    gradient at a class-specific orientation, plus Gaussian pixel noise.

    Classes are exactly balanced in both splits and the whole construction
    is a pure function of the seed.
    """
    rng = make_rng(seed)
    coord = np.linspace(-1.0, 1.0, side)
    cols, rows = np.meshgrid(coord, coord)
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    patterns = (np.cos(angles)[:, None, None] * cols[None] +
                np.sin(angles)[:, None, None] * rows[None])

    def split(count: int) -> Dataset:
        if count % num_classes != 0:
            raise ValueError(f"count {count} does not split evenly into "
                             f"{num_classes} classes")
        labels = np.arange(count, dtype=np.int64) % num_classes
        images = patterns[labels] + rng.normal(0.0, noise_std,
                                               size=(count, side, side))
        perm = rng.permutation(count)
        return Dataset(images=images[perm][..., None],
                       labels=labels[perm], num_classes=num_classes)

    return split(train_count), split(eval_count)


def _read_be_u32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise IdxFormatError(f"{path}: truncated at byte {offset}, "
                             f"expected a 4-byte big-endian integer")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx_images(path: str) -> np.ndarray:
    """Images from an IDX file, scaled to [0, 1], shape (n, H, W, 1)."""
    with open(path, "rb") as f:
        data = f.read()
    magic = _read_be_u32(data, 0, path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"{path}: bad magic at byte 0, expected "
                             f"{IDX_IMAGES_MAGIC:#010x}, got {magic:#010x}")
    count = _read_be_u32(data, 4, path)
    rows = _read_be_u32(data, 8, path)
    cols = _read_be_u32(data, 12, path)
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise IdxFormatError(f"{path}: truncated at byte {len(data)}, "
                             f"expected {expected} bytes for "
                             f"{count} images of {rows}x{cols}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols,
                           offset=16)
    return pixels.reshape(count, rows, cols, 1).astype(np.float64) / 255.0


def load_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    magic = _read_be_u32(data, 0, path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"{path}: bad magic at byte 0, expected "
                             f"{IDX_LABELS_MAGIC:#010x}, got {magic:#010x}")
    count = _read_be_u32(data, 4, path)
    if len(data) < 8 + count:
        raise IdxFormatError(f"{path}: truncated at byte {len(data)}, "
                             f"expected {8 + count} bytes for {count} labels")
    return np.frombuffer(data, dtype=np.uint8, count=count,
                         offset=8).astype(np.int64)


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Paired image/label IDX files as one dataset."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels")
    return Dataset(images=images, labels=labels,
                   num_classes=int(labels.max()) + 1 if labels.size else 0)
