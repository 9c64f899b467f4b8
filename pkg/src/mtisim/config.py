"""Scenario / profile JSON loading and schema validation."""

from __future__ import annotations

import csv
import json
import os
from importlib import resources
from pathlib import Path

import jsonschema

from mtisim.compression.fixedpoint import parse_format
from mtisim.compression.pruning import SparsityPoint
from mtisim.memory import KINDS, MemoryTechProfile
from mtisim.model import ALLOWED_ADAPTER_SIZES, ModelSpec, TaskSpec
from mtisim.perf import DatapathSpec, ScenarioConfig, Visit, round_robin

SCHEMA_VERSION = 1
PROFILE_ENV = "MTISIM_PROFILE"


class SchemaError(ValueError):
    """Input document does not match its schema; message names the field."""


_FRACTION = {"type": "number", "minimum": 0, "maximum": 1}
_POS_INT = {"type": "integer", "minimum": 1}
_SPARSITY_PAIR = {
    "type": "object",
    "required": ["s_embd", "s_tf"],
    "properties": {"s_embd": _FRACTION, "s_tf": _FRACTION},
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "tasks", "schedule"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "properties": {
                **{k: _POS_INT for k in ("vocab_size", "embed_dim", "hidden_dim", "ffn_dim",
                                         "num_layers", "num_heads", "max_seq_len",
                                         "max_position_embeddings", "token_type_count")},
                "share_adapters_across_layers": {"type": "boolean"},
                "include_pooler": {"type": "boolean"},
                "include_layer_norm": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "allowed_adapter_sizes": {"type": "array", "items": _POS_INT, "minItems": 1},
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["task_id", "num_labels", "adapter_sizes"],
                "properties": {
                    "task_id": {"type": "string", "minLength": 1},
                    "num_labels": _POS_INT,
                    "adapter_sizes": {"type": "array", "items": _POS_INT,
                                      "minItems": 2, "maxItems": 2},
                },
                "additionalProperties": False,
            },
        },
        "schedule": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["order"],
                    "properties": {
                        "order": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                        "inferences_per_visit": _POS_INT,
                        "rounds": _POS_INT,
                    },
                    "additionalProperties": False,
                },
                {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["task_id"],
                        "properties": {"task_id": {"type": "string"}, "inferences": _POS_INT},
                        "additionalProperties": False,
                    },
                },
            ]
        },
        "seq_len": _POS_INT,
        "format": {"type": "string", "pattern": r"^(fp32|[qQ]\d+_\d+)$"},
        "placement": {"enum": ["adapter-albert", "vanilla-albert"]},
        "accounting": {"enum": ["paper-parity", "full"]},
        "sparsity": {
            "oneOf": [
                _SPARSITY_PAIR,
                {
                    "type": "object",
                    "properties": {"adapter-albert": _SPARSITY_PAIR,
                                   "vanilla-albert": _SPARSITY_PAIR},
                    "additionalProperties": False,
                    "minProperties": 1,
                },
            ]
        },
        "datapath": {
            "type": "object",
            "properties": {"mac_units": _POS_INT, "clock_ghz": {"type": "number",
                                                                "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "profile": {"type": "string"},
    },
    "additionalProperties": False,
}

_NONNEG = {"type": "number", "minimum": 0}
TECH_SCHEMA = {
    "type": "object",
    "required": ["bits_per_cell", "read_energy_pj_per_bit", "write_energy_pj_per_bit",
                 "read_latency_ns", "write_latency_ns", "leakage_nw_per_byte",
                 "area_mm2_per_mib", "macros"],
    "properties": {
        "bits_per_cell": {"enum": [1, 2]},
        "read_energy_pj_per_bit": _NONNEG,
        "write_energy_pj_per_bit": _NONNEG,
        "read_latency_ns": _NONNEG,
        "write_latency_ns": _NONNEG,
        "leakage_nw_per_byte": _NONNEG,
        "area_mm2_per_mib": _NONNEG,
        "macros": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["capacity_bytes", "bandwidth_gb_per_s"],
                "properties": {"capacity_bytes": _POS_INT,
                               "bandwidth_gb_per_s": {"type": "number", "exclusiveMinimum": 0}},
                "additionalProperties": False,
            },
        },
        "note": {"type": "string"},
    },
    "additionalProperties": False,
}
PROFILE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "technologies"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "technologies": {
            "type": "object",
            "required": list(KINDS),
            "properties": {k: TECH_SCHEMA for k in KINDS},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "placement", "format", "area_mm2",
                 "energy_per_inference_pj", "latency_per_inference_ns", "energy_breakdown_pj",
                 "latency_breakdown_ns", "area_breakdown_mm2", "switch_count",
                 "total_inferences", "footprint_bytes", "plans"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "area_mm2": _NONNEG,
        "energy_per_inference_pj": _NONNEG,
        "latency_per_inference_ns": _NONNEG,
        "switch_count": {"type": "integer", "minimum": 0},
        "ratios_vs_baseline": {
            "type": "object",
            "required": ["area", "energy", "latency"],
        },
    },
}



def _payload(*required, **props):
    return {"type": "object", "required": ["schema_version", *required],
            "properties": {"schema_version": {"const": SCHEMA_VERSION}, **props}}


_ROW = {"type": "object", "required": ["s_embd", "s_tf", "accuracy", "cumulative_sparsity"]}
COMMAND_SCHEMAS = {
    "footprint": _payload("rows", rows={"type": "array", "items": {
        "type": "object", "required": ["placement", "format", "mlc_bytes", "slc_bytes",
                                       "sram_bytes"]}}),
    "simulate": REPORT_SCHEMA,
    "sweep": _payload("outputs", outputs={"type": "array", "items": {"type": "string"}}),
    "csp": _payload("best", "fallback", "embedding_only", "transformer_only",
                    best=_ROW, embedding_only=_ROW, transformer_only=_ROW,
                    fallback={"type": "boolean"}),
    "vase": _payload("adapter_size", "accuracy", adapter_size=_POS_INT),
    "encode": _payload("rows", "cols", "value_bits", "nonzeros"),
    "decode": _payload("rows", "cols", "value_bits", "popcount"),
    "quantize": _payload("format", "elements", "changed"),
    "inject": _payload("target", "position", "corruption",
                       corruption={"type": "integer", "minimum": 0}),
}


def _validate(doc, schema, what: str) -> None:
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{what}: field '{where}': {err.message}")


def validate_scenario(doc) -> None:
    _validate(doc, SCENARIO_SCHEMA, "scenario")


def validate_profile(doc) -> None:
    _validate(doc, PROFILE_SCHEMA, "profile")


def validate_report(doc) -> None:
    _validate(doc, REPORT_SCHEMA, "report")


def validate_command_output(command: str, doc) -> None:
    _validate(doc, COMMAND_SCHEMAS[command], f"{command} output")


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def data_path(name: str) -> Path:
    return Path(str(resources.files("mtisim") / "data" / name))


def default_profile_path() -> Path:
    env = os.environ.get(PROFILE_ENV)
    return Path(env) if env else data_path("default_profile.json")


def default_scenario_path() -> Path:
    return data_path("default_scenario.json")


def load_profile_doc(path) -> dict[str, MemoryTechProfile]:
    doc = _read_json(path)
    validate_profile(doc)
    try:
        return {k: MemoryTechProfile.from_dict(k, d) for k, d in doc["technologies"].items()}
    except ValueError as exc:
        raise SchemaError(f"profile: {exc}") from exc


def scenario_from_dict(doc: dict, profiles=None, base_dir: Path | None = None) -> ScenarioConfig:
    validate_scenario(doc)
    try:
        model = ModelSpec(**doc.get("model", {})).validate()
        allowed = tuple(doc.get("allowed_adapter_sizes", ALLOWED_ADAPTER_SIZES))
        tasks = [TaskSpec(t["task_id"], t["num_labels"], tuple(t["adapter_sizes"])).validate(allowed)
                 for t in doc["tasks"]]
        if len({t.task_id for t in tasks}) != len(tasks):
            raise ValueError("tasks: duplicate task_id")
        sched = doc["schedule"]
        if isinstance(sched, dict):
            visits = round_robin(sched["order"], sched.get("inferences_per_visit", 1),
                                 sched.get("rounds", 1))
        else:
            visits = [Visit(v["task_id"], v.get("inferences", 1)) for v in sched]
        sp = doc.get("sparsity", {"s_embd": 0.0, "s_tf": 0.0})
        if "s_embd" in sp:
            pair = (sp["s_embd"], sp["s_tf"])
            sparsity = {"adapter-albert": pair, "vanilla-albert": pair}
        else:
            sparsity = {k: (v["s_embd"], v["s_tf"]) for k, v in sp.items()}
        if profiles is None:
            if "profile" in doc:
                p = Path(doc["profile"])
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
            else:
                p = default_profile_path()
            profiles = load_profile_doc(p)
        dp = doc.get("datapath", {})
        return ScenarioConfig(
            model=model,
            tasks=tasks,
            schedule=visits,
            profiles=profiles,
            seq_len=doc.get("seq_len", 32),
            fmt=parse_format(doc.get("format", "fp32")),
            sparsity=sparsity,
            placement=doc.get("placement", "adapter-albert"),
            datapath=DatapathSpec(dp.get("mac_units", 256), dp.get("clock_ghz", 1.0)),
            accounting=doc.get("accounting", "paper-parity"),
            name=doc.get("name", "scenario"),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"scenario: {exc}") from exc


def load_scenario(path=None, profile_path=None) -> ScenarioConfig:
    path = Path(path) if path else default_scenario_path()
    doc = _read_json(path)
    profiles = load_profile_doc(profile_path) if profile_path else None
    return scenario_from_dict(doc, profiles, base_dir=path.parent)


def read_accuracy_grid(path) -> dict[int, float]:
    """CSV with header ``adapter_size,accuracy``."""
    rows = _read_csv(path, ("adapter_size", "accuracy"))
    try:
        return {int(r["adapter_size"]): float(r["accuracy"]) for r in rows}
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def read_sparsity_grid(path) -> list[SparsityPoint]:
    """CSV with header ``s_embd,s_tf,accuracy``."""
    rows = _read_csv(path, ("s_embd", "s_tf", "accuracy"))
    try:
        return [SparsityPoint(float(r["s_embd"]), float(r["s_tf"]), float(r["accuracy"]))
                for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _read_csv(path, columns) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in columns if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows
