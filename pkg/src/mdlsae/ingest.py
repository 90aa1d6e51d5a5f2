"""MNIST IDX parsing and dataset construction."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core_math import make_rng

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    def __init__(self, observed: int, expected: int):
        super().__init__(f"bad IDX magic {observed} (0x{observed:08x}), expected {expected}")
        self.observed = observed


class IdxLengthError(ValueError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"IDX payload length mismatch: expected {expected} bytes, got {actual}")
        self.expected, self.actual = expected, actual


@dataclass(frozen=True)
class IdxImages:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # uint8, shape (count, rows, cols)

    def to_bytes(self) -> bytes:
        header = struct.pack(">4I", IMAGE_MAGIC, self.count, self.rows, self.cols)
        return header + np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()


@dataclass(frozen=True)
class IdxLabels:
    count: int
    labels: np.ndarray

    def to_bytes(self) -> bytes:
        return struct.pack(">2I", LABEL_MAGIC, self.count) + self.labels.astype(np.uint8).tobytes()


def _header(buf: bytes, n_words: int, magic: int):
    if len(buf) < 4:
        raise IdxLengthError(4 * n_words, len(buf))
    (observed,) = struct.unpack_from(">I", buf, 0)
    if observed != magic:
        raise IdxFormatError(observed, magic)
    if len(buf) < 4 * n_words:
        raise IdxLengthError(4 * n_words, len(buf))
    return struct.unpack_from(f">{n_words}I", buf, 0)[1:]


def parse_idx_images(buf: bytes) -> IdxImages:
    buf = bytes(buf)
    count, rows, cols = _header(buf, 4, IMAGE_MAGIC)
    expected = 16 + count * rows * cols
    if len(buf) != expected:
        raise IdxLengthError(expected, len(buf))
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)
    return IdxImages(count, rows, cols, pixels)


def parse_idx_labels(buf: bytes) -> IdxLabels:
    buf = bytes(buf)
    (count,) = _header(buf, 2, LABEL_MAGIC)
    if len(buf) != 8 + count:
        raise IdxLengthError(8 + count, len(buf))
    return IdxLabels(count, np.frombuffer(buf, dtype=np.uint8, offset=8))


def read_bytes(path) -> bytes:
    """File contents; ``.gz`` files are decompressed."""
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def load_idx_images(path) -> IdxImages:
    return parse_idx_images(read_bytes(path))


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray
    split_seed: Optional[int] = None

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]


def normalize(images: IdxImages) -> Dataset:
    flat = images.pixels.reshape(images.count, images.rows * images.cols)
    return Dataset(flat.astype(np.float64) / 255.0)


def load_dataset(path, limit: Optional[int] = None) -> Dataset:
    """Load a dataset file: IDX images (optionally gzipped) or a 2-D ``.npy``.

    ``limit`` keeps the first ``limit`` rows.
    """
    path = Path(path)
    if path.suffix == ".npy":
        data = np.load(path, allow_pickle=False)
        if data.ndim != 2:
            raise ValueError(f"{path}: expected a 2-D array, got shape {data.shape}")
        ds = Dataset(np.asarray(data, dtype=np.float64))
    else:
        ds = normalize(load_idx_images(path))
    if limit is not None:
        ds = Dataset(ds.data[:limit], ds.split_seed)
    return ds


def synthetic_boolean_dataset(world, v_a, v_b, n: int, seed: int) -> Dataset:
    """Rows ``A * v_a + B * v_b`` with (A, B) drawn from ``world``'s joint law."""
    v_a = np.asarray(v_a, dtype=float).ravel()
    v_b = np.asarray(v_b, dtype=float).ravel()
    if v_a.shape != v_b.shape:
        raise ValueError(f"v_a and v_b differ in dimension: {v_a.shape} vs {v_b.shape}")
    p11 = world.p_ab
    p10 = max(world.p_a - p11, 0.0)
    p01 = max(world.p_b - p11, 0.0)
    u = make_rng(seed).random(n)
    # outcome cells in a fixed order: (1,1), (1,0), (0,1), (0,0)
    edges = np.cumsum([p11, p10, p01])
    cell = np.searchsorted(edges, u, side="right")
    a = (cell == 0) | (cell == 1)
    b = (cell == 0) | (cell == 2)
    data = a[:, None] * v_a + b[:, None] * v_b
    return Dataset(data.astype(np.float64), seed)
