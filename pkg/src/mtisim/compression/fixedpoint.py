"""Q(i, f) fixed-point formats with round-half-to-even and saturation."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FixedPointFormat:
    """``int_bits`` integer-and-sign bits, ``frac_bits`` fraction bits.

    ``is_float`` marks the FP32 pass-through sentinel; it is never quantized.
    """

    int_bits: int
    frac_bits: int
    is_float: bool = False

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0 or self.width <= 0:
            raise ValueError(f"invalid format Q({self.int_bits},{self.frac_bits})")
        if self.is_float and self.width != 32:
            raise ValueError("only the 32-bit float sentinel is supported")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def value_bytes(self) -> float:
        return self.width / 8

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_code(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_code(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.min_code * self.step

    @property
    def max_value(self) -> float:
        return self.max_code * self.step

    @property
    def name(self) -> str:
        return "fp32" if self.is_float else f"q{self.int_bits}_{self.frac_bits}"

    def __str__(self) -> str:
        return self.name


FP32 = FixedPointFormat(32, 0, is_float=True)
Q3_13 = FixedPointFormat(3, 13)
Q3_5 = FixedPointFormat(3, 5)
PAPER_FORMATS = (FP32, Q3_13, Q3_5)


def parse_format(text: str) -> FixedPointFormat:
    """Parse ``fp32``, ``q3_13``, ``Q(3,13)`` style names."""
    t = text.strip().lower()
    if t == "fp32":
        return FP32
    m = re.fullmatch(r"q\(?\s*(\d+)\s*[_,]\s*(\d+)\s*\)?", t)
    if not m:
        raise ValueError(f"unrecognised number format {text!r}")
    return FixedPointFormat(int(m.group(1)), int(m.group(2)))


def to_codes(x, fmt: FixedPointFormat) -> np.ndarray:
    """Saturating integer codes ``round_half_even(x * 2**f)``."""
    if fmt.is_float:
        raise ValueError("fp32 has no integer codes")
    scaled = np.rint(np.asarray(x, dtype=np.float64) * (2.0 ** fmt.frac_bits))
    return np.clip(scaled, fmt.min_code, fmt.max_code).astype(np.int64)


def from_codes(codes, fmt: FixedPointFormat) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * fmt.step


def quantize(t, fmt: FixedPointFormat) -> np.ndarray:
    """Map every element onto the nearest representable value of ``fmt``.

    Out-of-range values saturate at the format limits. FP32 returns the
    input unchanged.
    """
    if fmt.is_float:
        return np.array(t, copy=True)
    return from_codes(to_codes(t, fmt), fmt)


def storage_dtype(fmt: FixedPointFormat):
    if fmt.is_float:
        return np.float32
    if fmt.width <= 8:
        return np.int8
    if fmt.width <= 16:
        return np.int16
    if fmt.width <= 32:
        return np.int32
    return np.int64
