import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10


class DatasetFormatError(ValueError):
    """Raised for IDX files with a wrong magic number, truncated payload or mismatched counts."""


@dataclass
class Dataset:
    """Images flattened row-major to (N, h*w*c) with pixel values in [0, 1]."""
    images: np.ndarray
    labels: np.ndarray
    split: str = "test"
    image_shape: Tuple[int, int, int] = (28, 28, 1)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DatasetFormatError(
                f"images and labels differ in length: {len(self.images)} vs {len(self.labels)}"
            )
        if self.split not in ("train", "test"):
            raise DatasetFormatError(f"unknown split tag: {self.split}")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.split, self.image_shape)

    def head(self, n: int) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.split, self.image_shape)


def _open(path: str):
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_header(data: bytes, path: str, expected_magic: int, ndim: int) -> Tuple[int, ...]:
    header_size = 4 * (1 + ndim)
    if len(data) < header_size:
        raise DatasetFormatError(f"{path}: file too short for an IDX header")
    magic, *dims = struct.unpack(">" + "I" * (1 + ndim), data[:header_size])
    if magic != expected_magic:
        raise DatasetFormatError(
            f"{path}: wrong magic number 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    expected_bytes = int(np.prod(dims))
    if len(data) - header_size != expected_bytes:
        raise DatasetFormatError(
            f"{path}: payload has {len(data) - header_size} bytes, header announces {expected_bytes}"
        )
    return tuple(dims)


def read_idx_images(path: str) -> np.ndarray:
    """Raw uint8 images of shape (count, rows, cols)."""
    with _open(path) as f:
        data = f.read()
    count, rows, cols = _read_header(data, path, IMAGES_MAGIC, 3)
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    with _open(path) as f:
        data = f.read()
    (count,) = _read_header(data, path, LABELS_MAGIC, 1)
    return np.frombuffer(data, dtype=np.uint8, offset=8).copy()


def save_idx(path: str, data: np.ndarray) -> None:
    """Write a uint8 array as an IDX file: 3-d arrays as images, 1-d arrays as labels."""
    data = np.asarray(data)
    if data.ndim == 3:
        magic = IMAGES_MAGIC
    elif data.ndim == 1:
        magic = LABELS_MAGIC
    else:
        raise DatasetFormatError(f"save_idx supports 1-d labels or 3-d images, got {data.ndim} dimensions")
    open_fcn = gzip.open if path.endswith(".gz") else open
    with open_fcn(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(">" + "I" * data.ndim, *data.shape))
        f.write(data.astype(np.uint8).tobytes())


def load_mnist(images_path: str, labels_path: str, split: str = "test") -> Dataset:
    """
    Load an MNIST-format image/label pair.

    Pixels are scaled to [0, 1] by dividing the raw bytes by 255.

    Raises:
        FileNotFoundError: If either file does not exist
        DatasetFormatError: On a wrong magic number, truncated data, a count mismatch or out-of-range labels
    """
    for path in (images_path, labels_path):
        if not os.path.isfile(path):
            error_msg = f"Dataset file not found: {path}"
            logger.error(error_msg)
            raise FileNotFoundError(error_msg)

    logger.info(f"Reading IDX images: {images_path}")
    raw_images = read_idx_images(images_path)
    logger.info(f"Reading IDX labels: {labels_path}")
    labels = read_idx_labels(labels_path)

    if len(raw_images) != len(labels):
        raise DatasetFormatError(
            f"count mismatch: {len(raw_images)} images in {images_path}, {len(labels)} labels in {labels_path}"
        )
    if labels.size and labels.max() >= NUM_CLASSES:
        raise DatasetFormatError(f"{labels_path}: label {int(labels.max())} outside [0, {NUM_CLASSES})")

    count, rows, cols = raw_images.shape
    images = raw_images.reshape(count, rows * cols).astype(np.float64) / 255.0
    logger.info(f"Loaded {count} {split} samples of {rows}x{cols} pixels")
    return Dataset(images=images, labels=labels.astype(np.int64), split=split, image_shape=(rows, cols, 1))
