"""MNIST (IDX) and CIFAR-10 (binary batch) readers, plus per-band datasets."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import subband
from .errors import BadMagic, CountMismatch, LabelOutOfRange, MissingDataset, TruncatedFile

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
CIFAR_RECORD = 1 + 3 * 32 * 32

# md5 of the uncompressed files; gzipped copies are accepted too
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
MNIST_MD5 = {
    "train-images-idx3-ubyte": "6bbc9ace898e44ae57da46a324031adb",
    "train-labels-idx1-ubyte": "a25bea736e30d166cdddb491f175f624",
    "t10k-images-idx3-ubyte": "2646ac647ad5339dbf082846283269ea",
    "t10k-labels-idx1-ubyte": "27ae3e4e09519cfbb04c329615203637",
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1] (bands may be signed)
    labels: np.ndarray  # (N,) int64 in [0, 9]
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return tuple(self.images.shape[1:])

    def head(self, n):
        """First ``n`` samples (all of them if ``n`` is None or too large)."""
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.name)


@dataclass
class SubbandDataset:
    l0: np.ndarray
    g1: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __len__(self):
        return len(self.labels)

    def pair(self, i):
        return subband.SubbandPair(self.l0[i], self.g1[i])

    def band(self, which):
        """The ``"l0"`` or ``"g1"`` band as a plain :class:`Dataset`."""
        images = {"l0": self.l0, "g1": self.g1}[which]
        return Dataset(images, self.labels, f"{self.name}:{which}")


def _read_bytes(path):
    path = Path(path)
    if not path.exists():
        raise MissingDataset(f"{path} not found")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw, path, magic, ndims):
    need = 4 * (1 + ndims)
    if len(raw) < need:
        raise TruncatedFile(f"{path}: shorter than its IDX header")
    fields = struct.unpack(f">{1 + ndims}I", raw[:need])
    if fields[0] != magic:
        raise BadMagic(f"{path}: magic {fields[0]}, expected {magic}")
    return fields[1:], need


def load_mnist(images_path, labels_path, name="mnist"):
    raw = _read_bytes(images_path)
    (count, rows, cols), off = _idx_header(raw, images_path, IDX_IMAGES_MAGIC, 3)
    if len(raw) < off + count * rows * cols:
        raise TruncatedFile(f"{images_path}: {count} images of {rows}x{cols} need more bytes")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=off)

    lraw = _read_bytes(labels_path)
    (lcount,), loff = _idx_header(lraw, labels_path, IDX_LABELS_MAGIC, 1)
    if len(lraw) < loff + lcount:
        raise TruncatedFile(f"{labels_path}: {lcount} labels need more bytes")
    if lcount != count:
        raise CountMismatch(f"{count} images but {lcount} labels")
    labels = np.frombuffer(lraw, dtype=np.uint8, count=lcount, offset=loff).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise LabelOutOfRange(f"{labels_path}: label {labels.max()} outside [0, 9]")
    images = (pixels.reshape(count, 1, rows, cols).astype(np.float32)) / np.float32(255.0)
    return Dataset(images, labels, name)


def load_cifar10(batch_paths, name="cifar10"):
    images, labels = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) % CIFAR_RECORD:
            raise TruncatedFile(f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lab = rec[:, 0].astype(np.int64)
        if lab.size and lab.max() > 9:
            raise LabelOutOfRange(f"{path}: label {lab.max()} outside [0, 9]")
        labels.append(lab)
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    if not images:
        raise MissingDataset("no CIFAR-10 batch files given")
    pixels = np.concatenate(images)
    return Dataset(pixels.astype(np.float32) / np.float32(255.0), np.concatenate(labels), name)


def decompose_dataset(dataset: Dataset, chunk=4096) -> SubbandDataset:
    """Split every image into (L0, G1); labels pass through in order."""
    n = len(dataset)
    c, h, w = dataset.shape
    l0 = np.empty((n, c, h, w), dtype=np.float32)
    g1 = np.empty((n, c, (h + 1) // 2, (w + 1) // 2), dtype=np.float32)
    for start in range(0, n, chunk):
        pair = subband.decompose(dataset.images[start:start + chunk])
        l0[start:start + chunk] = pair.l0
        g1[start:start + chunk] = pair.g1
    return SubbandDataset(l0, g1, dataset.labels, dataset.name)


def _find(data_dir, filename):
    data_dir = Path(data_dir)
    for cand in (data_dir / filename, data_dir / (filename + ".gz"),
                 data_dir / "cifar-10-batches-bin" / filename):
        if cand.exists():
            return cand
    raise MissingDataset(f"{filename} not found under {data_dir}")


def load_dataset(name, data_dir, split):
    """Load ``"mnist"`` or ``"cifar10"``'s ``"train"``/``"test"`` split from ``data_dir``."""
    if name == "mnist":
        img, lab = MNIST_FILES[split]
        return load_mnist(_find(data_dir, img), _find(data_dir, lab), f"mnist-{split}")
    if name == "cifar10":
        return load_cifar10([_find(data_dir, f) for f in CIFAR_FILES[split]], f"cifar10-{split}")
    raise ValueError(f"unknown dataset {name!r}")


def expected_files_help():
    lines = ["MNIST (IDX, raw or .gz):"]
    for fname, md5 in MNIST_MD5.items():
        lines.append(f"  {fname}  md5 {md5} (uncompressed)")
    lines.append(f"CIFAR-10 binary version: {', '.join(CIFAR_FILES['train'] + CIFAR_FILES['test'])}")
    lines.append(f"  each {10000 * CIFAR_RECORD} bytes (10000 records of {CIFAR_RECORD})")
    return "\n".join(lines)
