"""Labeled image datasets: container, synthetic generator, file ingestion.

Supported on-disk formats are IDX image/label pairs (the classic ubyte
layout: ``0x00 0x00 <dtype> <ndim>`` then big-endian u32 extents) and CSV
rows of ``label,pixel0,pixel1,...`` with pixels in 0..255. Both decode to
float32 inputs normalized into [0, 1].
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, IngestError
from .rng import derive_rng

log = logging.getLogger(__name__)

_IDX_UBYTE = 0x08


@dataclass
class LabeledDataset:
    """Dense image classification dataset.

    images: (N, C, H, W) float32 in [0, 1]; labels: (N,) int64 in [0, class_count).
    """

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(
                f"labels outside [0, {self.class_count}): "
                f"range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def size(self) -> int:
        return self.images.shape[0]

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.images[indices], self.labels[indices], self.class_count)

    def of_class(self, label: int) -> "LabeledDataset":
        return self.subset(np.nonzero(self.labels == label)[0])

    def histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def concat(datasets: list[LabeledDataset]) -> LabeledDataset:
    if not datasets:
        raise DataError("cannot concatenate zero datasets")
    class_count = datasets[0].class_count
    return LabeledDataset(
        np.concatenate([d.images for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        class_count,
    )


def iter_batches(dataset: LabeledDataset, batch_size: int, rng: np.random.Generator | None = None):
    """Yield (images, labels) batches; shuffled when an rng is given."""
    order = np.arange(len(dataset))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


# ---------------------------------------------------------------------------
# Synthetic MNIST-style data
# ---------------------------------------------------------------------------

def _smooth(img: np.ndarray, passes: int = 2) -> np.ndarray:
    for _ in range(passes):
        padded = np.pad(img, 1, mode="edge")
        img = (
            padded[:-2, :-2] + padded[:-2, 1:-1] + padded[:-2, 2:]
            + padded[1:-1, :-2] + padded[1:-1, 1:-1] + padded[1:-1, 2:]
            + padded[2:, :-2] + padded[2:, 1:-1] + padded[2:, 2:]
        ) / 9.0
    return img


def class_prototypes(class_count: int, image_size: int, seed: int) -> np.ndarray:
    """One fixed smooth pattern per class, deterministic in (seed, class)."""
    protos = np.empty((class_count, image_size, image_size), dtype=np.float64)
    for c in range(class_count):
        rng = derive_rng(seed, "prototype", c)
        coarse = rng.normal(size=(7, 7))
        up = np.kron(coarse, np.ones((image_size // 7 + 1, image_size // 7 + 1)))
        field = _smooth(up[:image_size, :image_size], passes=3)
        lo, hi = field.min(), field.max()
        protos[c] = 0.85 * (field - lo) / (hi - lo) + 0.05
    return protos


def make_synthetic(
    train_size: int,
    test_size: int,
    class_count: int = 10,
    image_size: int = 28,
    noise: float = 0.3,
    max_shift: int = 2,
    seed: int = 0,
    prototype_seed: int = 7,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Generate an MNIST-shaped 10-class dataset from per-class prototypes.

    Each sample is its class prototype randomly shifted, amplitude-jittered
    and corrupted with per-pixel Gaussian noise, so models both generalize
    (prototype structure) and memorize (sample noise) at desk scale.

    The prototype alphabet is keyed by ``prototype_seed``, not ``seed``:
    like real digit glyphs, the classes themselves stay fixed while the seed
    varies the sample draws, so task difficulty is comparable across seeds.
    """
    protos = class_prototypes(class_count, image_size, prototype_seed)

    def _draw(split: str, n: int) -> LabeledDataset:
        rng = derive_rng(seed, "synthetic", split)
        labels = rng.integers(0, class_count, size=n)
        images = np.empty((n, 1, image_size, image_size), dtype=np.float32)
        shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
        scales = rng.uniform(0.8, 1.2, size=n)
        pixel_noise = rng.normal(0.0, noise, size=(n, image_size, image_size))
        for i in range(n):
            img = np.roll(protos[labels[i]], shifts[i], axis=(0, 1)) * scales[i]
            images[i, 0] = np.clip(img + pixel_noise[i], 0.0, 1.0)
        return LabeledDataset(images, labels.astype(np.int64), class_count)

    return _draw("train", train_size), _draw("test", test_size)


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def _read_idx(path: Path, expect_ndim: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise IngestError(f"{path}: truncated IDX header (file is {len(raw)} bytes)")
    zero1, zero2, dtype_code, ndim = struct.unpack(">BBBB", raw[:4])
    if zero1 != 0 or zero2 != 0 or dtype_code != _IDX_UBYTE:
        raise IngestError(
            f"{path}: bad IDX magic {raw[:4].hex()} at byte offset 0 "
            f"(expected 0000{_IDX_UBYTE:02x}<ndim>)"
        )
    if ndim != expect_ndim:
        raise IngestError(f"{path}: expected {expect_ndim}-d IDX data, header says {ndim}-d")
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IngestError(f"{path}: truncated IDX dimension block at byte offset {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = header_len + int(np.prod(dims))
    if len(raw) != expected:
        raise IngestError(
            f"{path}: payload ends at byte offset {len(raw)}, expected {expected} "
            f"for dims {dims}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(dims)


def ingest_idx(images_path: str | Path, labels_path: str | Path) -> LabeledDataset:
    """Decode an IDX image/label file pair."""
    images_u8 = _read_idx(Path(images_path), expect_ndim=3)
    labels_u8 = _read_idx(Path(labels_path), expect_ndim=1)
    if images_u8.shape[0] != labels_u8.shape[0]:
        raise IngestError(
            f"image count {images_u8.shape[0]} != label count {labels_u8.shape[0]}"
        )
    images = (images_u8.astype(np.float32) / 255.0)[:, None, :, :]
    labels = labels_u8.astype(np.int64)
    class_count = int(labels.max()) + 1 if len(labels) else 0
    ds = LabeledDataset(images, labels, class_count)
    log.info("ingested %d IDX samples, label histogram %s", len(ds), ds.histogram().tolist())
    return ds


def ingest_csv(path: str | Path, image_size: int | None = None) -> LabeledDataset:
    """Decode ``label,pixel...`` CSV rows (pixels 0..255, square images)."""
    path = Path(path)
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append(row)
    if not rows:
        raise IngestError(f"{path}: no data rows")
    width = len(rows[0]) - 1
    if width <= 0:
        raise IngestError(f"{path}: rows must be label,pixels...")
    side = image_size if image_size is not None else int(round(width**0.5))
    if side * side != width:
        raise IngestError(f"{path}: {width} pixels per row is not a square image")
    labels = np.empty(len(rows), dtype=np.int64)
    images = np.empty((len(rows), 1, side, side), dtype=np.float32)
    for i, row in enumerate(rows):
        if len(row) != width + 1:
            raise IngestError(f"{path}: row {i} has {len(row)} fields, expected {width + 1}")
        try:
            labels[i] = int(row[0])
            images[i, 0] = np.asarray(row[1:], dtype=np.float32).reshape(side, side) / 255.0
        except ValueError as exc:
            raise IngestError(f"{path}: row {i}: {exc}") from exc
    class_count = int(labels.max()) + 1
    ds = LabeledDataset(images, labels, class_count)
    log.info("ingested %d CSV samples, label histogram %s", len(ds), ds.histogram().tolist())
    return ds


def ingest_dataset(
    path: str | Path,
    fmt: str,
    labels_path: str | Path | None = None,
) -> LabeledDataset:
    """Dispatch on ``fmt`` in {"idx", "csv"}; IDX needs the label file too."""
    if fmt == "idx":
        if labels_path is None:
            raise IngestError("IDX ingestion needs both an image and a label file")
        return ingest_idx(path, labels_path)
    if fmt == "csv":
        return ingest_csv(path)
    raise IngestError(f"unknown dataset format {fmt!r} (expected 'idx' or 'csv')")


def write_idx_pair(dataset: LabeledDataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Encode a dataset back to an IDX pair (used by fixtures and export)."""
    n, _, h, w = dataset.images.shape
    images_u8 = np.clip(dataset.images[:, 0] * 255.0, 0, 255).round().astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">BBBB3I", 0, 0, _IDX_UBYTE, 3, n, h, w))
        fh.write(images_u8.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">BBBBI", 0, 0, _IDX_UBYTE, 1, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
