"""On-chip memory sizing for the SRAM / SLC-RRAM / MLC-RRAM scratchpad.

Units used throughout: bytes, nanoseconds, picojoules, GB/s (== bytes/ns),
mm^2. MLC capacities are *cell-equivalent* bytes: one byte of capacity is
eight cells, which hold 16 data bits at two bits per cell.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from mtisim.compression.fixedpoint import FixedPointFormat
from mtisim.compression.pruning import pruned_count
from mtisim.model import (
    ModelSpec,
    TaskSpec,
    count_partition,
    worst_case_task,
)

MIB = 1 << 20
KIB = 1 << 10

KINDS = ("SRAM", "SLC-RRAM", "MLC-RRAM", "DRAM")
ON_CHIP = ("SRAM", "SLC-RRAM", "MLC-RRAM")
PLACEMENTS = ("adapter-albert", "vanilla-albert")
ACCOUNTING = ("paper-parity", "full")
MAX_MACROS = 32


@dataclass(frozen=True)
class Macro:
    capacity_bytes: int
    bandwidth_gb_per_s: float


@dataclass(frozen=True)
class MemoryTechProfile:
    kind: str
    bits_per_cell: int
    read_energy_pj_per_bit: float
    write_energy_pj_per_bit: float
    read_latency_ns: float
    write_latency_ns: float
    leakage_nw_per_byte: float
    area_mm2_per_mib: float
    macros: tuple[Macro, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown memory kind {self.kind!r}")
        if self.bits_per_cell not in (1, 2):
            raise ValueError(f"{self.kind}: bits_per_cell must be 1 or 2")
        for name in ("read_energy_pj_per_bit", "write_energy_pj_per_bit", "read_latency_ns",
                     "write_latency_ns", "leakage_nw_per_byte", "area_mm2_per_mib"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.kind}: {name} must be >= 0")
        if self.kind in ("SLC-RRAM", "MLC-RRAM") and self.leakage_nw_per_byte != 0:
            raise ValueError(f"{self.kind}: non-volatile memories have zero leakage")
        for m in self.macros:
            if m.capacity_bytes <= 0 or m.bandwidth_gb_per_s <= 0:
                raise ValueError(f"{self.kind}: macro capacity and bandwidth must be positive")

    @classmethod
    def from_dict(cls, kind: str, d: dict) -> "MemoryTechProfile":
        return cls(
            kind=kind,
            bits_per_cell=int(d["bits_per_cell"]),
            read_energy_pj_per_bit=float(d["read_energy_pj_per_bit"]),
            write_energy_pj_per_bit=float(d["write_energy_pj_per_bit"]),
            read_latency_ns=float(d["read_latency_ns"]),
            write_latency_ns=float(d["write_latency_ns"]),
            leakage_nw_per_byte=float(d.get("leakage_nw_per_byte", 0.0)),
            area_mm2_per_mib=float(d.get("area_mm2_per_mib", 0.0)),
            macros=tuple(Macro(int(m["capacity_bytes"]), float(m["bandwidth_gb_per_s"]))
                         for m in d["macros"]),
        )

    def as_dict(self) -> dict:
        return {
            "bits_per_cell": self.bits_per_cell,
            "read_energy_pj_per_bit": self.read_energy_pj_per_bit,
            "write_energy_pj_per_bit": self.write_energy_pj_per_bit,
            "read_latency_ns": self.read_latency_ns,
            "write_latency_ns": self.write_latency_ns,
            "leakage_nw_per_byte": self.leakage_nw_per_byte,
            "area_mm2_per_mib": self.area_mm2_per_mib,
            "macros": [{"capacity_bytes": m.capacity_bytes,
                        "bandwidth_gb_per_s": m.bandwidth_gb_per_s} for m in self.macros],
        }


@dataclass(frozen=True)
class FootprintRequirement:
    mlc_bytes: float
    slc_bytes: float
    sram_bytes: float
    # SRAM composition, for reporting
    sram_params_bytes: float = 0.0
    sram_bitmask_bytes: float = 0.0
    sram_activation_bytes: float = 0.0

    def get(self, kind: str) -> float:
        return {"SRAM": self.sram_bytes, "SLC-RRAM": self.slc_bytes,
                "MLC-RRAM": self.mlc_bytes}[kind]

    def as_dict(self) -> dict:
        return {
            "mlc_bytes": self.mlc_bytes,
            "slc_bytes": self.slc_bytes,
            "sram_bytes": self.sram_bytes,
            "sram_params_bytes": self.sram_params_bytes,
            "sram_bitmask_bytes": self.sram_bitmask_bytes,
            "sram_activation_bytes": self.sram_activation_bytes,
        }


def nonzeros(n: int, sparsity: float) -> int:
    return n - pruned_count(n, sparsity)


def activation_buffer_bytes(spec: ModelSpec, fmt: FixedPointFormat) -> float:
    """Double-buffered activations for the widest layer at the longest sequence."""
    return spec.max_seq_len * max(spec.hidden_dim, spec.ffn_dim) * fmt.value_bytes * 2


def sram_param_bytes(spec: ModelSpec, task: TaskSpec, s_tf: float, fmt: FixedPointFormat,
                     placement: str, accounting: str) -> tuple[float, float]:
    """(value bytes, bitmask bytes) that live in SRAM for one task."""
    vb = fmt.value_bytes
    if placement == "adapter-albert":
        return count_partition(spec, task).task_specific * vb, 0.0
    c = count_partition(spec, task, adapters=False)
    values = (nonzeros(c.backbone_transformer, s_tf) + c.layer_norm + c.classifier) * vb
    bitmask = c.backbone_transformer / 8 if accounting == "full" else 0.0
    return values, bitmask


def footprint(spec: ModelSpec, tasks: Sequence[TaskSpec], s_embd: float, s_tf: float,
              fmt: FixedPointFormat, placement: str = "adapter-albert",
              accounting: str = "paper-parity", mlc_bits_per_cell: int = 2) -> FootprintRequirement:
    """Capacity each technology needs to hold the worst-case task on chip.

    adapter-albert keeps the whole pruned backbone in RRAM (bitmask in SLC,
    non-zero values in MLC) and only task-specific parameters in SRAM.
    vanilla-albert keeps only the embedding side in RRAM; the pruned,
    per-task fine-tuned encoder, layer norms and classifier sit in SRAM.
    ``full`` accounting adds the activation buffer and, for vanilla, the
    encoder bitmask to SRAM.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    if accounting not in ACCOUNTING:
        raise ValueError(f"unknown accounting {accounting!r}")
    if not tasks:
        return FootprintRequirement(0.0, 0.0, 0.0)
    worst = worst_case_task(spec, tasks, placement)
    c = count_partition(spec, worst)
    bits = fmt.width
    if placement == "adapter-albert":
        rram_params = c.backbone
        nz = nonzeros(c.backbone_embedding, s_embd) + nonzeros(c.backbone_transformer, s_tf)
    else:
        rram_params = c.backbone_embedding
        nz = nonzeros(c.backbone_embedding, s_embd)
    slc = rram_params / 8
    mlc = nz * bits / mlc_bits_per_cell / 8
    values, bitmask = sram_param_bytes(spec, worst, s_tf, fmt, placement, accounting)
    act = activation_buffer_bytes(spec, fmt) if accounting == "full" else 0.0
    return FootprintRequirement(mlc, slc, values + bitmask + act, values, bitmask, act)


@dataclass(frozen=True)
class PlanEntry:
    """Provisioned macros of one technology."""

    tech: MemoryTechProfile
    macros: tuple[tuple[Macro, int], ...] = field(default_factory=tuple)

    @property
    def capacity_bytes(self) -> int:
        return sum(m.capacity_bytes * n for m, n in self.macros)

    @property
    def macro_count(self) -> int:
        return sum(n for _, n in self.macros)

    @property
    def area_mm2(self) -> float:
        return self.capacity_bytes / MIB * self.tech.area_mm2_per_mib

    @property
    def leakage_nw(self) -> float:
        return self.capacity_bytes * self.tech.leakage_nw_per_byte

    def is_empty(self) -> bool:
        return self.macro_count == 0

    def as_dict(self) -> dict:
        return {
            "kind": self.tech.kind,
            "macros": [{"capacity_bytes": m.capacity_bytes,
                        "bandwidth_gb_per_s": m.bandwidth_gb_per_s, "count": n}
                       for m, n in self.macros],
            "capacity_bytes": self.capacity_bytes,
            "area_mm2": self.area_mm2,
            "bandwidth_gb_per_s": aggregate_bandwidth(self) if not self.is_empty() else 0.0,
        }


def aggregate_bandwidth(plan: PlanEntry) -> float:
    """Capacity-weighted mean of the member macro bandwidths (GB/s)."""
    cap = plan.capacity_bytes
    if cap == 0:
        raise ValueError("aggregate bandwidth of an empty plan")
    return sum(m.capacity_bytes * n * m.bandwidth_gb_per_s for m, n in plan.macros) / cap


def _score(counts, catalog, requirement):
    cap = sum(c * m.capacity_bytes for c, m in zip(counts, catalog))
    bw = sum(c * m.capacity_bytes * m.bandwidth_gb_per_s for c, m in zip(counts, catalog)) / cap
    return (cap - requirement, sum(counts), -bw)


def _exact_search(requirement: float, catalog: Sequence[Macro], budget: int):
    """Best count vector with at most ``budget`` macros, or None."""
    best = best_score = None
    *head, last = catalog
    bounds = [min(budget, math.ceil(requirement / m.capacity_bytes)) for m in head]
    for prefix in itertools.product(*(range(b + 1) for b in bounds)):
        used = sum(prefix)
        if used > budget:
            continue
        covered = sum(c * m.capacity_bytes for c, m in zip(prefix, head))
        need = max(0, math.ceil((requirement - covered) / last.capacity_bytes))
        if used + need > budget or used + need == 0:
            continue
        counts = (*prefix, need)
        score = _score(counts, catalog, requirement)
        if best_score is None or score < best_score:
            best, best_score = counts, score
    return best


def provision(requirement: float, tech: MemoryTechProfile, max_macros: int = MAX_MACROS) -> PlanEntry:
    """Cheapest macro multiset covering ``requirement`` bytes.

    Minimizes excess capacity, then macro count, then prefers higher
    aggregate bandwidth. Searches exhaustively up to ``max_macros`` macros;
    larger requirements are covered largest-first and the remainder is
    searched exactly.
    """
    if not tech.macros:
        raise ValueError(f"{tech.kind}: macro catalog is empty")
    if requirement <= 0:
        return PlanEntry(tech)
    requirement = math.ceil(requirement)  # whole bytes
    catalog = sorted(tech.macros, key=lambda m: (-m.capacity_bytes, -m.bandwidth_gb_per_s))
    counts = _exact_search(requirement, catalog, max_macros)
    if counts is None:
        biggest = catalog[0]
        bulk = max(0, requirement // biggest.capacity_bytes - (max_macros - 1))
        rest = _exact_search(requirement - bulk * biggest.capacity_bytes, catalog, max_macros)
        counts = (rest[0] + bulk, *rest[1:])
    macros = tuple((m, n) for m, n in zip(catalog, counts) if n)
    return PlanEntry(tech, macros)


def access_cost(plan: PlanEntry, n_bytes: float, op: str = "read") -> tuple[float, float]:
    """(energy pJ, time ns) to move ``n_bytes`` through ``plan``.

    Time is transfer time at the aggregate bandwidth, never below one
    access latency.
    """
    if op not in ("read", "write"):
        raise ValueError(f"unknown op {op!r}")
    t = plan.tech
    e_bit = t.read_energy_pj_per_bit if op == "read" else t.write_energy_pj_per_bit
    lat = t.read_latency_ns if op == "read" else t.write_latency_ns
    if n_bytes == 0:
        return 0.0, lat
    bw = aggregate_bandwidth(plan) if not plan.is_empty() else 0.0
    if bw <= 0:
        raise ValueError(f"{t.kind}: zero bandwidth")
    return n_bytes * 8 * e_bit, max(n_bytes / bw, lat)


def channel_plan(tech: MemoryTechProfile) -> PlanEntry:
    """Single-channel plan for off-chip memory (first catalog entry)."""
    return PlanEntry(tech, ((tech.macros[0], 1),))


def provision_all(req: FootprintRequirement, profiles: dict[str, MemoryTechProfile]) -> dict[str, PlanEntry]:
    return {kind: provision(req.get(kind), profiles[kind]) for kind in ON_CHIP}
