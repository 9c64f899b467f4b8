"""Single-bit fault injection into bitmask-encoded tensors."""

from __future__ import annotations

import numpy as np

from mtisim.compression.bitmask import SparseTensor, decode_codes

_UINT = {1: np.uint8, 2: np.uint16, 4: np.uint32, 8: np.uint64}


def bit_length(s: SparseTensor, target: str) -> int:
    if target == "bitmask":
        return s.size
    if target == "values":
        return len(s.values) * s.value_bits
    raise ValueError(f"unknown fault target {target!r}")


def inject_fault(s: SparseTensor, target: str, position: int) -> tuple[SparseTensor, int]:
    """Flip one bit and count the dense positions whose decoded word changed.

    ``position`` indexes mask bits in flat element order, or value bits as
    ``word * value_bits + bit`` with bit 0 the least significant. Decoding of
    the corrupted tensor uses the zero-fill policy.
    """
    n = bit_length(s, target)
    if not 0 <= position < n:
        raise IndexError(f"bit position {position} outside [0, {n}) for {target}")
    out = s.copy()
    if target == "bitmask":
        out.bitmask[position // 8] ^= np.uint8(1 << (position % 8))
    else:
        word, bit = divmod(position, s.value_bits)
        raw = out.values.view(_UINT[out.values.dtype.itemsize])
        raw[word] ^= raw.dtype.type(1) << raw.dtype.type(bit)
    before = decode_codes(s)
    after = decode_codes(out)
    u = _UINT[before.dtype.itemsize]
    corruption = int(np.count_nonzero(before.view(u) != after.view(u)))
    return out, corruption


def random_fault_study(s: SparseTensor, n_faults: int, rng: np.random.Generator) -> dict:
    """Mean corruption of uniformly placed bitmask and value faults."""
    results = {}
    for target in ("bitmask", "values"):
        n = bit_length(s, target)
        if n == 0:
            results[target] = []
            continue
        pos = rng.integers(0, n, size=n_faults)
        results[target] = [inject_fault(s, target, int(p))[1] for p in pos]
    return results
