"""Per-inference latency, energy and area for multi-task inference.

The accelerator re-reads the shared layer from the scratchpad on every one
of the ``num_layers`` passes. Compute energy is not modeled; compute time
is, so latency may be compute-bound. A task switch reloads the SRAM-resident
parameters of the incoming task from DRAM.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from mtisim.compression.fixedpoint import FP32, FixedPointFormat
from mtisim.memory import (
    ON_CHIP,
    FootprintRequirement,
    MemoryTechProfile,
    PlanEntry,
    access_cost,
    channel_plan,
    footprint,
    provision_all,
    sram_param_bytes,
)
from mtisim.model import (
    ModelSpec,
    TaskSpec,
    adapter_params,
    embedding_params,
    layer_norm_params,
    pooler_params,
    shared_layer_params,
)

PJ_PER_NW_NS = 1e-6


@dataclass(frozen=True)
class DatapathSpec:
    mac_units: int = 256
    clock_ghz: float = 1.0

    def __post_init__(self):
        if self.mac_units <= 0 or self.clock_ghz <= 0:
            raise ValueError("datapath mac_units and clock must be positive")

    @property
    def macs_per_ns(self) -> float:
        return self.mac_units * self.clock_ghz


@dataclass(frozen=True)
class Visit:
    task_id: str
    inferences: int = 1


@dataclass
class ScenarioConfig:
    model: ModelSpec
    tasks: list[TaskSpec]
    schedule: list[Visit]
    profiles: Mapping[str, MemoryTechProfile]
    seq_len: int = 32
    fmt: FixedPointFormat = FP32
    sparsity: dict[str, tuple[float, float]] = field(default_factory=dict)
    placement: str = "adapter-albert"
    datapath: DatapathSpec = field(default_factory=DatapathSpec)
    accounting: str = "paper-parity"
    name: str = "scenario"

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("schedule is empty")
        ids = {t.task_id for t in self.tasks}
        for v in self.schedule:
            if v.task_id not in ids:
                raise ValueError(f"scheduled task {v.task_id!r} is not declared")
            if v.inferences < 1:
                raise ValueError("inferences per visit must be >= 1")

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    @property
    def sparsities(self) -> tuple[float, float]:
        return self.sparsity.get(self.placement, (0.0, 0.0))

    def with_(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **changes)


def compute_work(model: ModelSpec, seq_len: int, adapter_sizes: Sequence[int] = ()) -> int:
    """MAC count of one inference.

    Per pass: Q/K/V/O projections, attention scores and context, both
    feed-forward matrices and the adapter down/up projections; plus the
    embedding projection once.
    """
    L, H, F, E = seq_len, model.hidden_dim, model.ffn_dim, model.embed_dim
    per_layer = 4 * L * H * H + 2 * L * L * H + 2 * L * H * F
    adapters = sum(2 * L * H * s for s in adapter_sizes)
    return model.num_layers * (per_layer + adapters) + L * E * H


def activation_elements(model: ModelSpec, seq_len: int, adapter_sizes: Sequence[int] = ()) -> int:
    """Activation elements written (and read back once) per inference."""
    L, H, F = seq_len, model.hidden_dim, model.ffn_dim
    # Q, K, V, context, attention out, FFN hidden, FFN out, two LN outputs
    per_layer = L * (3 * H + H + H + F + H + 2 * H) + model.num_heads * L * L
    per_layer += sum(L * (s + H) for s in adapter_sizes if s)
    return model.num_layers * per_layer + L * H


def _nz(n: float, sparsity: float) -> float:
    return n * (1.0 - sparsity)


def weight_traffic(scenario: ScenarioConfig, task: TaskSpec) -> dict[str, float]:
    """Bytes read from each on-chip technology during one inference."""
    m, L = scenario.model, scenario.seq_len
    vb = scenario.fmt.value_bytes
    s_embd, s_tf = scenario.sparsities
    adapter = scenario.placement == "adapter-albert"

    rows = min(L, m.vocab_size) + min(L, m.max_position_embeddings) + min(L, m.token_type_count)
    emb_read = rows * m.embed_dim + (embedding_params(m) - (m.vocab_size + m.max_position_embeddings
                                                             + m.token_type_count) * m.embed_dim)
    enc_read = shared_layer_params(m) * m.num_layers + pooler_params(m)

    traffic = {k: 0.0 for k in ON_CHIP}
    traffic["MLC-RRAM"] += _nz(emb_read, s_embd) * vb
    traffic["SLC-RRAM"] += emb_read / 8
    if adapter:
        traffic["MLC-RRAM"] += _nz(enc_read, s_tf) * vb
        traffic["SLC-RRAM"] += enc_read / 8
    else:
        traffic["SRAM"] += _nz(enc_read, s_tf) * vb + enc_read / 8

    block_ln = layer_norm_params(m) - 2 * m.embed_dim if m.include_layer_norm else 0
    task_read = block_ln * m.num_layers + (layer_norm_params(m) - block_ln)
    task_read += m.hidden_dim * task.num_labels + task.num_labels
    if adapter:
        task_read += m.num_layers * sum(adapter_params(m.hidden_dim, s) for s in task.adapter_sizes)
    traffic["SRAM"] += task_read * vb
    return traffic


def _adapter_sizes(scenario: ScenarioConfig, task: TaskSpec) -> tuple[int, ...]:
    return tuple(task.adapter_sizes) if scenario.placement == "adapter-albert" else ()


def _check_plans(plans: Mapping[str, PlanEntry]) -> None:
    missing = [k for k in ON_CHIP if k not in plans]
    if missing:
        raise ValueError(f"unprovisioned technology: {', '.join(missing)}")


@dataclass(frozen=True)
class InferenceCost:
    energy_pj: float
    time_ns: float
    weight_energy_pj: float
    activation_energy_pj: float
    leakage_energy_pj: float
    compute_time_ns: float
    weight_time_ns: float
    activation_time_ns: float


def inference_cost(scenario: ScenarioConfig, plans: Mapping[str, PlanEntry],
                   task: TaskSpec | None = None) -> InferenceCost:
    """Energy and time of one inference of ``task`` (default: first scheduled task)."""
    _check_plans(plans)
    task = task or scenario.task(scenario.schedule[0].task_id)
    sizes = _adapter_sizes(scenario, task)
    compute_ns = compute_work(scenario.model, scenario.seq_len, sizes) / scenario.datapath.macs_per_ns

    traffic = weight_traffic(scenario, task)
    w_energy, w_time = 0.0, 0.0
    for kind, n_bytes in traffic.items():
        e, t = access_cost(plans[kind], n_bytes, "read")
        w_energy += e
        w_time = max(w_time, t)  # technologies are separate arrays, read concurrently

    act_bytes = activation_elements(scenario.model, scenario.seq_len, sizes) * scenario.fmt.value_bytes
    e_w, t_w = access_cost(plans["SRAM"], act_bytes, "write")
    e_r, t_r = access_cost(plans["SRAM"], act_bytes, "read")
    act_time = t_w + t_r

    time_ns = max(compute_ns, w_time, act_time)
    leak = sum(p.leakage_nw for p in plans.values()) * time_ns * PJ_PER_NW_NS
    return InferenceCost(
        energy_pj=w_energy + e_w + e_r + leak,
        time_ns=time_ns,
        weight_energy_pj=w_energy,
        activation_energy_pj=e_w + e_r,
        leakage_energy_pj=leak,
        compute_time_ns=compute_ns,
        weight_time_ns=w_time,
        activation_time_ns=act_time,
    )


def switch_bytes(scenario: ScenarioConfig, task: TaskSpec) -> float:
    """SRAM-resident parameter bytes of ``task`` that a switch must reload."""
    values, bitmask = sram_param_bytes(scenario.model, task, scenario.sparsities[1], scenario.fmt,
                                       scenario.placement, "full")
    return values + bitmask


def switch_cost(from_task: TaskSpec, to_task: TaskSpec, scenario: ScenarioConfig,
                plans: Mapping[str, PlanEntry]) -> tuple[float, float]:
    """(energy pJ, time ns) to reload ``to_task`` from DRAM into SRAM.

    Embedding-side parameters stay resident in RRAM under both placements.
    """
    if from_task.task_id == to_task.task_id:
        return 0.0, 0.0
    _check_plans(plans)
    n_bytes = switch_bytes(scenario, to_task)
    e_dram, t_dram = access_cost(channel_plan(scenario.profiles["DRAM"]), n_bytes, "read")
    e_sram, t_sram = access_cost(plans["SRAM"], n_bytes, "write")
    return e_dram + e_sram, t_dram + t_sram


def provision_scenario(scenario: ScenarioConfig) -> tuple[FootprintRequirement, dict[str, PlanEntry]]:
    """Footprint (full accounting) and macro plans for the scenario's placement."""
    s_embd, s_tf = scenario.sparsities
    req = footprint(scenario.model, scenario.tasks, s_embd, s_tf, scenario.fmt,
                    scenario.placement, "full",
                    mlc_bits_per_cell=scenario.profiles["MLC-RRAM"].bits_per_cell)
    return req, provision_all(req, scenario.profiles)


@dataclass(frozen=True)
class CostReport:
    name: str
    placement: str
    fmt: str
    area_mm2: float
    energy_per_inference_pj: float
    latency_per_inference_ns: float
    energy_breakdown_pj: dict
    latency_breakdown_ns: dict
    area_breakdown_mm2: dict
    switch_count: int
    total_inferences: int
    footprint: dict
    plans: dict
    ratios: dict | None = None

    def as_dict(self) -> dict:
        d = {
            "schema_version": 1,
            "name": self.name,
            "placement": self.placement,
            "format": self.fmt,
            "area_mm2": self.area_mm2,
            "energy_per_inference_pj": self.energy_per_inference_pj,
            "latency_per_inference_ns": self.latency_per_inference_ns,
            "energy_breakdown_pj": self.energy_breakdown_pj,
            "latency_breakdown_ns": self.latency_breakdown_ns,
            "area_breakdown_mm2": self.area_breakdown_mm2,
            "switch_count": self.switch_count,
            "total_inferences": self.total_inferences,
            "footprint_bytes": self.footprint,
            "plans": self.plans,
        }
        if self.ratios is not None:
            d["ratios_vs_baseline"] = self.ratios
        return d

    def csv_rows(self) -> list[tuple[str, str, float, str]]:
        rows = [("area", "total", self.area_mm2, "mm2")]
        rows += [("area", k, v, "mm2") for k, v in self.area_breakdown_mm2.items()]
        rows.append(("energy_per_inference", "total", self.energy_per_inference_pj, "pJ"))
        rows += [("energy_per_inference", k, v, "pJ") for k, v in self.energy_breakdown_pj.items()]
        rows.append(("latency_per_inference", "total", self.latency_per_inference_ns, "ns"))
        rows += [("latency_per_inference", k, v, "ns") for k, v in self.latency_breakdown_ns.items()]
        rows.append(("switch_count", "total", float(self.switch_count), "count"))
        for k, v in (self.ratios or {}).items():
            rows.append(("ratio_vs_baseline", k, v, "x"))
        return rows


def run_scenario(scenario: ScenarioConfig) -> CostReport:
    """Amortized per-inference cost over one period of the (cyclic) schedule.

    A switch is charged wherever consecutive visits differ, including the
    wrap from the last visit back to the first, so a single-task schedule
    never switches.
    """
    req, plans = provision_scenario(scenario)
    sched = scenario.schedule
    leak_nw = sum(p.leakage_nw for p in plans.values())

    e_weight = e_act = e_leak = e_switch = 0.0
    t_inf = t_switch = 0.0
    switches = 0
    total = 0
    cache: dict[str, InferenceCost] = {}
    for i, visit in enumerate(sched):
        task = scenario.task(visit.task_id)
        if task.task_id not in cache:
            cache[task.task_id] = inference_cost(scenario, plans, task)
        c = cache[task.task_id]
        n = visit.inferences
        total += n
        e_weight += c.weight_energy_pj * n
        e_act += c.activation_energy_pj * n
        e_leak += c.leakage_energy_pj * n
        t_inf += c.time_ns * n
        nxt = scenario.task(sched[(i + 1) % len(sched)].task_id)
        if nxt.task_id != task.task_id:
            e, t = switch_cost(task, nxt, scenario, plans)
            switches += 1
            e_switch += e
            t_switch += t
            e_leak += leak_nw * t * PJ_PER_NW_NS

    energy = {
        "weight_reads": e_weight / total,
        "activations": e_act / total,
        "dram_switch": e_switch / total,
        "leakage": e_leak / total,
    }
    latency = {"inference": t_inf / total, "switch": t_switch / total}
    area = {k: plans[k].area_mm2 for k in ON_CHIP}
    return CostReport(
        name=scenario.name,
        placement=scenario.placement,
        fmt=scenario.fmt.name,
        area_mm2=sum(area.values()),
        energy_per_inference_pj=sum(energy.values()),
        latency_per_inference_ns=sum(latency.values()),
        energy_breakdown_pj=energy,
        latency_breakdown_ns=latency,
        area_breakdown_mm2=area,
        switch_count=switches,
        total_inferences=total,
        footprint=req.as_dict(),
        plans={k: plans[k].as_dict() for k in ON_CHIP},
    )


def compare(report: CostReport, baseline: CostReport) -> dict[str, float]:
    """Baseline-over-report ratios; above 1 means ``report`` improves on the baseline."""
    out = {}
    for key, attr in (("area", "area_mm2"), ("energy", "energy_per_inference_pj"),
                      ("latency", "latency_per_inference_ns")):
        ours, base = getattr(report, attr), getattr(baseline, attr)
        if base == 0 or ours == 0:
            raise ValueError(f"cannot normalize {key}: zero metric")
        out[key] = base / ours
    return out


def with_ratios(report: CostReport, baseline: CostReport) -> CostReport:
    from dataclasses import replace
    return replace(report, ratios=compare(report, baseline))


def round_robin(task_ids: Sequence[str], inferences_per_visit: int = 1, rounds: int = 1) -> list[Visit]:
    return [Visit(t, inferences_per_visit) for _ in range(rounds) for t in task_ids]
