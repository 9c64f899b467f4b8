"""Magnitude pruning and critical-sparsity-point search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class SparsityPoint:
    s_embd: float
    s_tf: float
    accuracy: float

    def __post_init__(self):
        for name in ("s_embd", "s_tf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def pruned_count(n: int, sparsity: float) -> int:
    """Number of elements zeroed when pruning ``n`` elements to ``sparsity``."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity {sparsity} outside [0, 1]")
    # rounding guards against 0.29 * 100 = 28.999...
    return min(n, math.floor(round(sparsity * n, 9)))


def prune_magnitude(t, sparsity: float) -> np.ndarray:
    """Zero the ``floor(sparsity * n)`` smallest-magnitude elements.

    Equal magnitudes are pruned in flat (row-major) order.
    """
    arr = np.array(t, copy=True)
    k = pruned_count(arr.size, sparsity)
    if k:
        flat = arr.reshape(-1)
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:k]] = 0
    return arr


def _fractions(p) -> tuple[float, float]:
    if hasattr(p, "p_embd"):
        return p.p_embd, p.p_tf
    p_embd, p_tf = p
    return float(p_embd), float(p_tf)


def cumulative_sparsity(s_embd: float, s_tf: float, p) -> float:
    """Whole-model sparsity as the parameter-weighted embedding and encoder sparsities.

    ``p`` is a :class:`~mtisim.model.PartitionedCounts` or a ``(p_embd, p_tf)`` pair.
    """
    for v in (s_embd, s_tf):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"sparsity {v} outside [0, 1]")
    p_embd, p_tf = _fractions(p)
    return s_embd * p_embd + s_tf * p_tf


def find_csp_1d(curve: Iterable[tuple[float, float]], baseline: float) -> float:
    """Highest sparsity whose accuracy still reaches ``baseline`` (0 if none)."""
    curve = list(curve)
    if not curve:
        raise ValueError("sparsity curve is empty")
    xs = [s for s, _ in curve]
    if len(set(xs)) != len(xs):
        raise ValueError("sparsity values must be distinct")
    ok = [s for s, acc in curve if acc >= baseline]
    return max(ok) if ok else 0.0


def find_csp_2d(grid: Sequence[SparsityPoint], baseline: float, p) -> SparsityPoint:
    """Grid point maximizing cumulative sparsity among those reaching ``baseline``.

    Ties prefer higher accuracy, then lower embedding sparsity. When nothing
    qualifies the unpruned point is returned: the grid's own (0, 0) entry if
    present, else a synthetic one carrying ``baseline`` as its accuracy.
    """
    if not grid:
        raise ValueError("sparsity grid is empty")
    ok = [g for g in grid if g.accuracy >= baseline]
    if ok:
        return max(ok, key=lambda g: (cumulative_sparsity(g.s_embd, g.s_tf, p),
                                      g.accuracy, -g.s_embd))
    for g in grid:
        if g.s_embd == 0 and g.s_tf == 0:
            return g
    return SparsityPoint(0.0, 0.0, baseline)


def axis_optimum(grid: Sequence[SparsityPoint], baseline: float, p, axis: str) -> SparsityPoint:
    """CSP restricted to points where only one partition is pruned."""
    if axis == "embd":
        sub = [g for g in grid if g.s_tf == 0]
    elif axis == "tf":
        sub = [g for g in grid if g.s_embd == 0]
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return find_csp_2d(sub or [SparsityPoint(0.0, 0.0, baseline)], baseline, p)
