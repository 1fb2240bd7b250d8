"""Desk-scale dataset pipeline: synthetic spiking-classification tasks, the
SPKD binary tensor file format, static-to-sequence encoding, and batching.

SPKD layout (all integers little-endian):

    magic "SPKD" | version u32 | n_samples u32 | n_classes u32
    | rank u32 (3 or 4) | dims u32*rank      -- (C,H,W) or (T,C,H,W)
    | dtype u32 (0 = u8, 1 = f32) | payload | labels u16 * n_samples

u8 payloads decode to value/255. File round-trips are bit-exact.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .tensor import seeded_rng

__all__ = [
    "Dataset",
    "Batch",
    "DatasetFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "LabelOverflowError",
    "SYNTH_TASKS",
    "synth_generate",
    "encode_static_sequence",
    "write_dataset",
    "load_dataset",
    "batch_iter",
]

MAGIC = b"SPKD"
VERSION = 1
SYNTH_TASKS = ("bars", "checker", "moving_dot")


class DatasetFormatError(ValueError):
    """Malformed SPKD file."""


class BadMagicError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class LabelOverflowError(DatasetFormatError):
    pass


@dataclass
class Dataset:
    """In-memory samples: images [n,C,H,W] or [n,T,C,H,W], labels [n]."""

    images: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.images.ndim not in (4, 5):
            raise ValueError(f"images must be rank 4 or 5, got shape {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ValueError("images/labels length mismatch")

    def __len__(self):
        return len(self.images)

    @property
    def has_time_axis(self) -> bool:
        return self.images.ndim == 5

    def __iter__(self):
        for img, label in zip(self.images, self.labels):
            yield img, int(label)


@dataclass
class Batch:
    images: np.ndarray  # [T, B, C, H, W]
    labels: np.ndarray  # [B]


def encode_static_sequence(img: np.ndarray, t_steps: int) -> np.ndarray:
    """Repeat a static [C,H,W] image T times along a new leading axis."""
    if t_steps < 1:
        raise ValueError(f"t_steps must be >= 1, got {t_steps}")
    return np.broadcast_to(img, (t_steps,) + img.shape).copy()


def _noisy(rng, clean, noise_sigma):
    return np.clip(clean + rng.normal(0.0, noise_sigma, size=clean.shape), 0.0, 1.0)


def _bars_sample(rng, label, h, w, noise_sigma):
    phase = int(rng.integers(0, 4))
    if label == 0:  # horizontal stripes
        clean = (((np.arange(h)[:, None] + phase) // 2) % 2).astype(np.float64)
        clean = np.broadcast_to(clean, (h, w))
    else:  # vertical stripes
        clean = (((np.arange(w)[None, :] + phase) // 2) % 2).astype(np.float64)
        clean = np.broadcast_to(clean, (h, w))
    return _noisy(rng, clean, noise_sigma)[None]


def _checker_sample(rng, label, h, w, noise_sigma):
    cell = 4
    grid = (np.arange(h)[:, None] // cell + np.arange(w)[None, :] // cell + label) % 2
    return _noisy(rng, grid.astype(np.float64), noise_sigma)[None]


def _moving_dot_sample(rng, label, h, w, t_steps, noise_sigma):
    """A 2x2 dot drifting left (0) or right (1) with wraparound.

    The start column is uniform with wraparound, so per-pixel marginals are
    identical across classes; only the temporal structure separates them.
    """
    row = int(rng.integers(0, h - 1))
    col0 = int(rng.integers(0, w))
    step = 1 if label == 1 else -1
    frames = np.zeros((t_steps, 1, h, w))
    for t in range(t_steps):
        col = (col0 + step * t) % w
        frames[t, 0, row:row + 2, col] = 1.0
        frames[t, 0, row:row + 2, (col + 1) % w] = 1.0
    return _noisy(rng, frames, noise_sigma)


def synth_generate(task, n_samples, *, height=16, width=16, t_steps=4, seed=0,
                   noise_sigma=0.1) -> Dataset:
    """Deterministic balanced two-class synthetic dataset."""
    if task not in SYNTH_TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {SYNTH_TASKS}")
    rng = seeded_rng(seed)
    images = []
    labels = np.arange(n_samples) % 2
    for label in labels:
        if task == "bars":
            images.append(_bars_sample(rng, label, height, width, noise_sigma))
        elif task == "checker":
            images.append(_checker_sample(rng, label, height, width, noise_sigma))
        else:
            images.append(_moving_dot_sample(rng, label, height, width, t_steps, noise_sigma))
    stacked = np.stack(images).astype(np.float32)
    return Dataset(stacked, labels.astype(np.uint16), n_classes=2)


def write_dataset(ds: Dataset, path) -> None:
    images = ds.images
    if images.dtype == np.uint8:
        dtype_code, payload = 0, images.tobytes()
    else:
        dtype_code = 1
        payload = np.ascontiguousarray(images, dtype="<f4").tobytes()
    dims = images.shape[1:]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, len(images), ds.n_classes, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<I", dtype_code))
        fh.write(payload)
        fh.write(np.ascontiguousarray(ds.labels, dtype="<u2").tobytes())


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedPayloadError(f"truncated file while reading {what}")
    return data


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, n_samples, n_classes, rank = struct.unpack(
            "<IIII", _read_exact(fh, 16, "header")
        )
        if version != VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        if rank not in (3, 4):
            raise DatasetFormatError(f"sample rank must be 3 or 4, got {rank}")
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
        (dtype_code,) = struct.unpack("<I", _read_exact(fh, 4, "dtype"))
        if dtype_code not in (0, 1):
            raise DatasetFormatError(f"unknown dtype code {dtype_code}")
        count = n_samples * int(np.prod(dims))
        itemsize = 1 if dtype_code == 0 else 4
        payload = _read_exact(fh, count * itemsize, "payload")
        raw_labels = _read_exact(fh, 2 * n_samples, "labels")
        if fh.read(1):
            raise DatasetFormatError("trailing bytes after labels")
    if dtype_code == 0:
        images = np.frombuffer(payload, dtype=np.uint8).reshape((n_samples,) + dims)
        images = images.astype(np.float32) / 255.0
    else:
        images = np.frombuffer(payload, dtype="<f4").reshape((n_samples,) + dims).copy()
    labels = np.frombuffer(raw_labels, dtype="<u2").copy()
    if len(labels) and labels.max() >= n_classes:
        raise LabelOverflowError(
            f"label {labels.max()} exceeds declared class count {n_classes}"
        )
    return Dataset(images, labels, n_classes=n_classes)


def batch_iter(ds: Dataset, batch_size, t_steps, shuffle_seed=None):
    """Yield ceil(n/B) batches in [T,B,C,H,W] layout; last may be short.

    Static datasets are repeated along T; datasets with a native time axis
    must match ``t_steps`` exactly. ``shuffle_seed`` applies a seeded
    permutation; None keeps file order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if ds.has_time_axis and ds.images.shape[1] != t_steps:
        raise ValueError(
            f"dataset carries T={ds.images.shape[1]} but t_steps={t_steps} requested"
        )
    order = np.arange(len(ds))
    if shuffle_seed is not None:
        order = seeded_rng(shuffle_seed).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        imgs = ds.images[idx]
        if ds.has_time_axis:
            batch = np.moveaxis(imgs, 1, 0)  # [B,T,C,H,W] -> [T,B,...]
        else:
            batch = np.broadcast_to(imgs, (t_steps,) + imgs.shape)
        yield Batch(np.ascontiguousarray(batch), ds.labels[idx].astype(np.int64))
