"""Fixed-point formats and stochastic rounding of weight tensors."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTensor, UnsupportedWordLength

WORD_LENGTHS = (4, 8, 16, 32)


class RoundingSchedule(enum.Enum):
    NONE = "none"
    AFTER_FINAL_EPOCH = "final"
    AFTER_EVERY_EPOCH = "every"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "none": cls.NONE,
            "final": cls.AFTER_FINAL_EPOCH,
            "afterfinalepoch": cls.AFTER_FINAL_EPOCH,
            "every": cls.AFTER_EVERY_EPOCH,
            "aftereveryepoch": cls.AFTER_EVERY_EPOCH,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown rounding schedule {text!r}; use none, final or every") from None


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed point with ``word_length`` bits, ``frac_length`` of them fractional."""

    word_length: int
    frac_length: int

    def __post_init__(self):
        if self.word_length not in WORD_LENGTHS:
            raise UnsupportedWordLength(f"word length {self.word_length} not in {WORD_LENGTHS}")

    @property
    def integer_length(self):
        return self.word_length - self.frac_length

    @property
    def step(self):
        return math.ldexp(1.0, -self.frac_length)

    @property
    def min_code(self):
        return -(1 << (self.word_length - 1))

    @property
    def max_code(self):
        return (1 << (self.word_length - 1)) - 1

    @property
    def min_value(self):
        return self.min_code * self.step

    @property
    def max_value(self):
        return self.max_code * self.step


def _ceil_log2(m):
    # exact for powers of two, unlike ceil(math.log2(m))
    frac, exp = math.frexp(m)
    return exp - 1 if frac == 0.5 else exp


def derive_format(values, word_length) -> FixedPointFormat:
    """Pick the fractional length so the largest magnitude fits.

    integer_length = ceil(log2(max|v|)) + 1 (1 for an all-zero tensor); the
    sign bit is part of the integer length. A maximum that is an exact power
    of two saturates by one step.
    """
    arr = np.asarray(values)
    if arr.size == 0:
        raise EmptyTensor("cannot derive a fixed-point format from an empty tensor")
    if word_length not in WORD_LENGTHS:
        raise UnsupportedWordLength(f"word length {word_length} not in {WORD_LENGTHS}")
    m = float(np.max(np.abs(arr)))
    if not math.isfinite(m):
        raise ValueError("tensor contains non-finite values")
    integer_length = 1 if m == 0.0 else _ceil_log2(m) + 1
    return FixedPointFormat(word_length, word_length - integer_length)


def stochastic_round_array(values, fmt: FixedPointFormat, rng):
    """Round each element down or up to the grid with P(up) = residue/step, then saturate.

    Computed in float64; the caller casts back.
    """
    scaled = np.asarray(values, dtype=np.float64) / fmt.step
    lo = np.floor(scaled)
    up = rng.random(scaled.shape) < (scaled - lo)
    codes = np.clip(lo + up, fmt.min_code, fmt.max_code)
    return codes * fmt.step


def stochastic_round(x, fmt: FixedPointFormat, rng):
    return float(stochastic_round_array(np.float64(x), fmt, rng))


def quantize_tensor(values, word_length, rng):
    """Stochastically round a tensor to its own derived format.

    32-bit is the unquantized baseline: the input comes back untouched.
    """
    if word_length == 32:
        if np.asarray(values).size == 0:
            raise EmptyTensor("cannot quantize an empty tensor")
        return values
    arr = np.asarray(values)
    fmt = derive_format(arr, word_length)
    return stochastic_round_array(arr, fmt, rng).astype(arr.dtype, copy=False)


def quantize_group(tensors, word_length, rng):
    """Quantize a layer's tensors in place under one format derived from all of them.

    Returns the format, or None for 32-bit.
    """
    if word_length == 32:
        return None
    peak = max(float(np.max(np.abs(t))) for t in tensors)
    fmt = derive_format(np.array([peak]), word_length)
    for t in tensors:
        t[...] = stochastic_round_array(t, fmt, rng)
    return fmt


def apply_schedule(network, schedule, epoch_index, total_epochs, word_length, rng):
    """Quantize ``network``'s weights in place if ``schedule`` fires at this epoch.

    Each trainable layer (weights plus bias) gets its own format.
    """
    schedule = RoundingSchedule.parse(schedule)
    if not 0 <= epoch_index < total_epochs:
        raise ValueError(f"epoch_index {epoch_index} outside [0, {total_epochs})")
    fire = schedule is RoundingSchedule.AFTER_EVERY_EPOCH or (
        schedule is RoundingSchedule.AFTER_FINAL_EPOCH and epoch_index == total_epochs - 1
    )
    if fire:
        quantize_network(network, word_length, rng)
    return network


def quantize_network(network, word_length, rng):
    formats = []
    for group in network.param_groups():
        formats.append(quantize_group(group, word_length, rng))
    return formats
