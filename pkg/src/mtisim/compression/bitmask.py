"""Bitmask sparse encoding and its binary file layout.

Layout of a ``.smask`` file, all little-endian::

    uint32 rows
    uint32 cols
    uint32 value_bits          # 8, 16, 32 or 64
    uint8  bitmask[ceil(rows*cols / 8)]
    values[popcount]           # int8/int16 codes, float32 or float64

Bit ``k`` of the mask is element ``k`` of the row-major flattening, stored
in byte ``k // 8`` at bit position ``k % 8`` (LSB first). Padding bits in
the last byte are zero. 8- and 16-bit values are two's complement
fixed-point codes; their scale is not part of the file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mtisim.compression.fixedpoint import FixedPointFormat, storage_dtype, to_codes

_HEADER = struct.Struct("<III")
_DTYPES = {8: np.dtype("<i1"), 16: np.dtype("<i2"), 32: np.dtype("<f4"), 64: np.dtype("<f8")}


class BitmaskDeficitError(ValueError):
    """Mask popcount and value count disagree."""


@dataclass
class SparseTensor:
    rows: int
    cols: int
    bitmask: np.ndarray       # packed uint8, LSB-first
    values: np.ndarray        # storage dtype; integer codes for fixed-point
    frac_bits: int = 0

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def value_bits(self) -> int:
        return self.values.dtype.itemsize * 8

    def mask(self) -> np.ndarray:
        return np.unpackbits(self.bitmask, count=self.size, bitorder="little").astype(bool)

    def popcount(self) -> int:
        return int(self.mask().sum())

    def real_values(self) -> np.ndarray:
        if self.values.dtype.kind in "iu":
            return self.values.astype(np.float64) * 2.0 ** -self.frac_bits
        return self.values

    def copy(self) -> "SparseTensor":
        return SparseTensor(self.rows, self.cols, self.bitmask.copy(), self.values.copy(),
                            self.frac_bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (self.rows == other.rows and self.cols == other.cols
                and self.frac_bits == other.frac_bits
                and self.values.dtype == other.values.dtype
                and np.array_equal(self.bitmask, other.bitmask)
                and self.values.tobytes() == other.values.tobytes())


def _as_2d(t) -> np.ndarray:
    arr = np.asarray(t)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D tensor, got shape {arr.shape}")
    return arr


def bitmask_encode(t, fmt: FixedPointFormat | None = None) -> SparseTensor:
    """Split ``t`` into a presence mask and its non-zero values in flat order.

    Without ``fmt`` values keep the tensor's float dtype (float64 unless the
    input is float32). FP32 stores float32; fixed formats store saturating
    integer codes, and elements whose code is 0 are treated as pruned.
    Float elements are pruned only when they are +0.0.
    """
    arr = _as_2d(t)
    rows, cols = arr.shape
    flat = arr.reshape(-1)
    frac = 0
    if fmt is None:
        data = flat.astype(np.float32 if flat.dtype == np.float32 else np.float64, copy=False)
    elif fmt.is_float:
        data = flat.astype(np.float32)
    else:
        data = to_codes(flat, fmt).astype(storage_dtype(fmt))
        frac = fmt.frac_bits
    # raw-bit test so that -0.0 survives the round trip
    present = data.view(f"u{data.dtype.itemsize}") != 0 if data.dtype.kind == "f" else data != 0
    return SparseTensor(rows, cols, np.packbits(present, bitorder="little"),
                        data[present].copy(), frac)


def bitmask_decode(s: SparseTensor, deficit_policy: str = "error") -> np.ndarray:
    """Expand a sparse tensor back to dense form.

    Values are consumed in order at each set mask bit. If the mask and the
    value vector disagree (only after corruption), ``"error"`` raises and
    ``"zero-fill"`` leaves unmatched set positions at 0 and ignores surplus
    values.
    """
    if deficit_policy not in ("error", "zero-fill"):
        raise ValueError(f"unknown deficit policy {deficit_policy!r}")
    positions = np.flatnonzero(s.mask())
    vals = s.real_values()
    if len(positions) != len(vals) and deficit_policy == "error":
        raise BitmaskDeficitError(
            f"bitmask has {len(positions)} set bits but {len(vals)} values are stored")
    out = np.zeros(s.size, dtype=vals.dtype)
    m = min(len(positions), len(vals))
    out[positions[:m]] = vals[:m]
    return out.reshape(s.rows, s.cols)


def decode_codes(s: SparseTensor) -> np.ndarray:
    """Zero-fill decode of the raw stored words, without scaling."""
    positions = np.flatnonzero(s.mask())
    out = np.zeros(s.size, dtype=s.values.dtype)
    m = min(len(positions), len(s.values))
    out[positions[:m]] = s.values[:m]
    return out


def to_bytes(s: SparseTensor) -> bytes:
    bits = s.value_bits
    if bits not in _DTYPES:
        raise ValueError(f"unsupported value width {bits}")
    body = s.values.astype(_DTYPES[bits], copy=False).tobytes()
    return _HEADER.pack(s.rows, s.cols, bits) + s.bitmask.astype(np.uint8).tobytes() + body


def from_bytes(buf: bytes, fmt: FixedPointFormat | None = None) -> SparseTensor:
    """Parse the binary layout. ``fmt`` supplies the scale of integer codes."""
    if len(buf) < _HEADER.size:
        raise ValueError("truncated sparse tensor header")
    rows, cols, bits = _HEADER.unpack_from(buf)
    if bits not in _DTYPES:
        raise ValueError(f"unsupported value width {bits}")
    n_mask = (rows * cols + 7) // 8
    start = _HEADER.size
    mask = np.frombuffer(buf, dtype=np.uint8, count=n_mask, offset=start).copy()
    rest = buf[start + n_mask:]
    dt = _DTYPES[bits]
    if len(rest) % dt.itemsize:
        raise ValueError("value section is not a whole number of words")
    values = np.frombuffer(rest, dtype=dt).astype(dt.newbyteorder("="))
    frac = fmt.frac_bits if (fmt is not None and not fmt.is_float) else 0
    return SparseTensor(rows, cols, mask, values, frac)


def save_sparse(s: SparseTensor, path) -> None:
    Path(path).write_bytes(to_bytes(s))


def load_sparse(path, fmt: FixedPointFormat | None = None) -> SparseTensor:
    return from_bytes(Path(path).read_bytes(), fmt)
