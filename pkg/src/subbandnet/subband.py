"""Two-band Burt pyramid split: full-resolution edge band L0 and
half-resolution texture band G1.

Every function works on arrays shaped ``(..., H, W)``, so a single
``(C, H, W)`` image and an ``(N, C, H, W)`` batch go through the same code.
Channels are filtered independently.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ImageTooSmall, TruncatedFile, BadMagic

# Burt's generating kernel; symmetric and sums to 1.
KERNEL = (1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16)

BAND_MAGIC = b"SBND"


@dataclass
class SubbandPair:
    l0: np.ndarray
    g1: np.ndarray


def _as_image(image):
    arr = np.asarray(image)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if arr.ndim < 2 or arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise DimensionMismatch(f"expected an array shaped (..., H, W) with H, W >= 1, got {arr.shape}")
    return arr


def _blur_axis(x, axis, gain):
    n = x.shape[axis]
    pad = [(0, 0)] * x.ndim
    pad[axis] = (2, 2)
    # "reflect" mirrors about the edge sample without repeating it
    p = np.moveaxis(np.pad(x, pad, mode="reflect"), axis, -1)
    out = np.zeros(p.shape[:-1] + (n,), dtype=x.dtype)
    for t, w in enumerate(KERNEL):
        out += (w * gain) * p[..., t:t + n]
    return np.moveaxis(out, -1, axis)


def _blur(x, gain=1.0):
    return _blur_axis(_blur_axis(x, -1, gain), -2, gain)


def gaussian_blur(image):
    """Separable 5-tap Burt blur with reflective borders; shape preserved."""
    return _blur(_as_image(image))


def reduce(image):
    """Blur, then keep even rows and columns. Output is ceil(H/2) x ceil(W/2)."""
    return np.ascontiguousarray(gaussian_blur(image)[..., ::2, ::2])


def expand(image, target_height, target_width):
    """Zero-interleave up to ``(target_height, target_width)`` and blur with gain 4.

    ``ceil(target/2)`` must equal the input size on both axes.
    """
    img = _as_image(image)
    h, w = img.shape[-2:]
    if (target_height + 1) // 2 != h or (target_width + 1) // 2 != w or target_height < 1 or target_width < 1:
        raise DimensionMismatch(
            f"cannot expand {h}x{w} to {target_height}x{target_width}: need ceil(target/2) == source"
        )
    up = np.zeros(img.shape[:-2] + (target_height, target_width), dtype=img.dtype)
    up[..., ::2, ::2] = img
    return _blur(up, gain=2.0)


def decompose(image) -> SubbandPair:
    img = _as_image(image)
    h, w = img.shape[-2:]
    if h < 2 or w < 2:
        raise ImageTooSmall(f"decompose needs H, W >= 2, got {h}x{w}")
    g1 = reduce(img)
    l0 = img - expand(g1, h, w)
    return SubbandPair(l0=l0, g1=g1)


def reconstruct(pair: SubbandPair):
    l0, g1 = _as_image(pair.l0), _as_image(pair.g1)
    if l0.shape[:-2] != g1.shape[:-2]:
        raise DimensionMismatch(f"leading dims differ: l0 {l0.shape}, g1 {g1.shape}")
    h, w = l0.shape[-2:]
    return l0 + expand(g1, h, w)


def write_band(path, bands):
    """Write ``(N, C, H, W)`` (or one ``(C, H, W)``) float32 little-endian with an SBND header.

    The image count is implied by the payload length.
    """
    arr = np.asarray(bands, dtype="<f4")
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise DimensionMismatch(f"expected (N, C, H, W) or (C, H, W), got {arr.shape}")
    _, c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(BAND_MAGIC + struct.pack("<III", c, h, w))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_band(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise TruncatedFile(f"{path}: shorter than the 16-byte header")
    if raw[:4] != BAND_MAGIC:
        raise BadMagic(f"{path}: expected magic {BAND_MAGIC!r}, got {raw[:4]!r}")
    c, h, w = struct.unpack("<III", raw[4:16])
    per_image = c * h * w * 4
    payload = len(raw) - 16
    if per_image == 0 or payload % per_image:
        raise TruncatedFile(f"{path}: payload of {payload} bytes is not a whole number of {c}x{h}x{w} images")
    return np.frombuffer(raw, dtype="<f4", offset=16).reshape(-1, c, h, w).astype(np.float32)
