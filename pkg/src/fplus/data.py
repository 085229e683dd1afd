"""IDX (MNIST-style) reading and writing, subsets, and synthetic blobs."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DataError(ValueError):
    """Malformed or unusable dataset input."""


class BadMagicError(DataError):
    pass


class TruncatedError(DataError):
    pass


class LabelRangeError(DataError):
    pass


class InsufficientExamplesError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # [n, channels, height, width], values in [0, 1]
    labels: np.ndarray  # [n] int64
    class_count: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"images must be [n, c, h, w], got shape {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise LabelRangeError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def _maybe_gunzip(raw: bytes) -> bytes:
    return gzip.decompress(raw) if raw[:2] == GZIP_MAGIC else raw


def _header(raw: bytes, magic: int, dims: int, what: str) -> tuple[int, ...]:
    need = 4 * (1 + dims)
    if len(raw) < need:
        raise TruncatedError(f"{what} header needs {need} bytes, got {len(raw)}")
    found, *counts = struct.unpack(f">{1 + dims}I", raw[:need])
    if found != magic:
        raise BadMagicError(f"{what}: expected magic 0x{magic:08x}, found 0x{found:08x}")
    return tuple(counts)


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Decode an IDX3 image file into float64 [n, 1, h, w] scaled to [0, 1]."""
    raw = _maybe_gunzip(bytes(raw))
    n, h, w = _header(raw, IMAGES_MAGIC, 3, "image file")
    expected = n * h * w
    payload = raw[16:]
    if len(payload) < expected:
        raise TruncatedError(f"image payload: expected {expected} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=expected)
    return pixels.reshape(n, 1, h, w).astype(np.float64) / 255.0


def parse_idx_labels(raw: bytes, class_count: int = 10) -> np.ndarray:
    raw = _maybe_gunzip(bytes(raw))
    (n,) = _header(raw, LABELS_MAGIC, 1, "label file")
    payload = raw[8:]
    if len(payload) < n:
        raise TruncatedError(f"label payload: expected {n} bytes, got {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8, count=n).astype(np.int64)
    if n and labels.max() >= class_count:
        raise LabelRangeError(f"label {labels.max()} out of range for {class_count} classes")
    return labels


def write_idx_images(images: np.ndarray) -> bytes:
    """Encode [n, h, w] / [n, 1, h, w] data (uint8, or floats in [0, 1]) as IDX3."""
    arr = np.asarray(images)
    if arr.ndim == 4:
        arr = arr[:, 0]
    if arr.dtype != np.uint8:
        arr = np.rint(arr * 255.0).astype(np.uint8)
    n, h, w = arr.shape
    return struct.pack(">4I", IMAGES_MAGIC, n, h, w) + arr.tobytes()


def write_idx_labels(labels) -> bytes:
    arr = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", LABELS_MAGIC, len(arr)) + arr.tobytes()


def _find(root: Path, stem: str) -> Optional[Path]:
    for name in (stem, stem + ".gz"):
        if (root / name).is_file():
            return root / name
    return None


def expected_files(split: str) -> tuple[str, str]:
    return MNIST_FILES[split]


def load_idx_dataset(root: Union[str, os.PathLike], split: str = "train", class_count: int = 10) -> Dataset:
    """Load ``train`` or ``test`` from a directory using the canonical MNIST file names."""
    root = Path(root)
    img_stem, lbl_stem = MNIST_FILES[split]
    img_path, lbl_path = _find(root, img_stem), _find(root, lbl_stem)
    missing = [s for s, p in ((img_stem, img_path), (lbl_stem, lbl_path)) if p is None]
    if missing:
        raise FileNotFoundError(
            f"missing {', '.join(missing)} (optionally .gz) in {root}; "
            f"expected files: {', '.join(f for pair in MNIST_FILES.values() for f in pair)}"
        )
    images = parse_idx_images(img_path.read_bytes())
    labels = parse_idx_labels(lbl_path.read_bytes(), class_count)
    return Dataset(images, labels, class_count)


def stratified_subset(d: Dataset, per_class: int, seed: int) -> Dataset:
    """Exactly ``per_class`` examples of every class, shuffled, chosen by ``seed``."""
    if per_class < 1:
        raise ValueError("per_class must be positive")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(d.class_count):
        idx = np.flatnonzero(d.labels == c)
        if len(idx) < per_class:
            raise InsufficientExamplesError(
                f"class {c} has {len(idx)} examples, fewer than per_class={per_class}"
            )
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    order = rng.permutation(np.concatenate(chosen))
    return Dataset(d.images[order], d.labels[order], d.class_count)


def synth_blobs(n_per_class: int, classes: int, spread: float, seed: int,
                dim: int = 2, distance: float = 10.0) -> Dataset:
    """Isotropic Gaussian blobs, shaped [n, 1, 1, dim] for the dense model.

    Centres sit on a circle (dim 2) or along the coordinate axes, pairwise at
    least ``distance`` apart.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    if dim == 2:
        # chord between neighbours equals `distance`
        radius = distance / (2.0 * np.sin(np.pi / classes))
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centres = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        if classes > 2 * dim:
            raise ValueError(f"dim={dim} supports at most {2 * dim} axis centres")
        centres = np.zeros((classes, dim))
        for c in range(classes):
            centres[c, c % dim] = (distance / np.sqrt(2.0)) * (1 if c < dim else -1)
    points = centres[:, None, :] + spread * rng.standard_normal((classes, n_per_class, dim))
    labels = np.repeat(np.arange(classes), n_per_class)
    order = rng.permutation(len(labels))
    images = points.reshape(-1, dim)[order].reshape(-1, 1, 1, dim)
    return Dataset(images, labels[order], classes)
