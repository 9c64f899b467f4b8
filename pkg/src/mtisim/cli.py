"""Command-line front end.

Exit codes: 0 success, 2 usage error (bad arguments, unreadable file),
3 input schema error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from mtisim import __version__
from mtisim.compression import (
    PAPER_FORMATS,
    BitmaskDeficitError,
    SparsityPoint,
    axis_optimum,
    bitmask_decode,
    bitmask_encode,
    cumulative_sparsity,
    find_csp_2d,
    inject_fault,
    load_sparse,
    parse_format,
    quantize,
    save_sparse,
)
from mtisim.compression.faults import bit_length
from mtisim.config import (
    SchemaError,
    default_profile_path,
    default_scenario_path,
    load_scenario,
    read_accuracy_grid,
    read_sparsity_grid,
    validate_command_output,
    validate_report,
)
from mtisim.memory import MIB, ON_CHIP, PLACEMENTS, footprint
from mtisim.model import count_partition, vase_select, worst_case_task
from mtisim.perf import CostReport, ScenarioConfig, round_robin, run_scenario, with_ratios

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantError(RuntimeError):
    pass


class UsageError(Exception):
    pass


def _placement(text: str) -> str:
    t = text if text.endswith("-albert") else f"{text}-albert"
    if t not in PLACEMENTS:
        raise argparse.ArgumentTypeError(f"placement must be adapter or vanilla, got {text!r}")
    return t


def _fmt(text: str):
    try:
        return parse_format(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    try:
        validate_command_output(args.command, payload)
    except SchemaError as exc:
        raise InvariantError(str(exc)) from exc
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        print(_dump(payload))


def _load(args) -> ScenarioConfig:
    return load_scenario(args.scenario, args.profile)


def _read_tensor(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"cannot read {path}")
    if p.suffix == ".npy":
        arr = np.load(p, allow_pickle=False)
    else:
        arr = np.loadtxt(p, delimiter=",", ndmin=2)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise SchemaError(f"{path}: expected a 2-D tensor, got shape {arr.shape}")
    return arr


def _write_tensor(arr: np.ndarray, path) -> None:
    p = Path(path)
    if p.suffix == ".npy":
        np.save(p, arr, allow_pickle=False)
    else:
        np.savetxt(p, arr, delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------- footprint

def cmd_footprint(args) -> int:
    sc = _load(args)
    placements = [args.placement] if args.placement else list(PLACEMENTS)
    formats = [args.fmt] if args.fmt else list(PAPER_FORMATS)
    accounting = args.accounting or sc.accounting
    rows = []
    for pl in placements:
        s_embd, s_tf = sc.sparsity.get(pl, (0.0, 0.0))
        for f in formats:
            req = footprint(sc.model, sc.tasks, s_embd, s_tf, f, pl, accounting,
                            mlc_bits_per_cell=sc.profiles["MLC-RRAM"].bits_per_cell)
            rows.append({
                "placement": pl, "format": f.name, "accounting": accounting,
                "s_embd": s_embd, "s_tf": s_tf,
                "mlc_bytes": req.mlc_bytes, "slc_bytes": req.slc_bytes,
                "sram_bytes": req.sram_bytes,
                "mlc_mib": req.mlc_bytes / MIB, "slc_mib": req.slc_bytes / MIB,
                "sram_mib": req.sram_bytes / MIB,
            })
    payload = {"schema_version": 1, "scenario": sc.name, "rows": rows}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "footprint.json").write_text(_dump(payload) + "\n")
    if args.format == "table":
        print(f"{'placement':<16}{'format':<8}{'MLC RRAM':>12}{'SLC RRAM':>12}{'SRAM':>12}   (MiB)")
        for r in rows:
            print(f"{r['placement']:<16}{r['format']:<8}{r['mlc_mib']:>12.3f}"
                  f"{r['slc_mib']:>12.3f}{r['sram_mib']:>12.3f}")
    else:
        _emit(args, payload, rows)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _override(sc: ScenarioConfig, placement=None, fmt=None, ipv=None) -> ScenarioConfig:
    changes = {}
    if placement:
        changes["placement"] = placement
    if fmt:
        changes["fmt"] = fmt
    if ipv:
        order = [v.task_id for v in sc.schedule]
        changes["schedule"] = round_robin(order, ipv)
    return sc.with_(**changes) if changes else sc


def _check_report(report: CostReport) -> None:
    def close(a, b):
        return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-9)

    if not close(report.energy_per_inference_pj, sum(report.energy_breakdown_pj.values())):
        raise InvariantError("energy total differs from its breakdown")
    if not close(report.latency_per_inference_ns, sum(report.latency_breakdown_ns.values())):
        raise InvariantError("latency total differs from its breakdown")
    if not close(report.area_mm2, sum(report.area_breakdown_mm2.values())):
        raise InvariantError("area total differs from its breakdown")
    need = {"SRAM": "sram_bytes", "SLC-RRAM": "slc_bytes", "MLC-RRAM": "mlc_bytes"}
    for kind in ON_CHIP:
        if report.plans[kind]["capacity_bytes"] < report.footprint[need[kind]]:
            raise InvariantError(f"{kind} under-provisioned")


def simulate(sc: ScenarioConfig, baseline: ScenarioConfig | None = None) -> CostReport:
    report = run_scenario(sc)
    _check_report(report)
    if baseline is not None:
        base = run_scenario(baseline)
        _check_report(base)
        report = with_ratios(report, base)
    return report


def _scenario_echo(sc: ScenarioConfig) -> dict:
    return {
        "name": sc.name,
        "placement": sc.placement,
        "format": sc.fmt.name,
        "seq_len": sc.seq_len,
        "sparsity": {k: list(v) for k, v in sc.sparsity.items()},
        "tasks": [{"task_id": t.task_id, "num_labels": t.num_labels,
                   "adapter_sizes": list(t.adapter_sizes)} for t in sc.tasks],
        "schedule": [{"task_id": v.task_id, "inferences": v.inferences} for v in sc.schedule],
        "datapath": {"mac_units": sc.datapath.mac_units, "clock_ghz": sc.datapath.clock_ghz},
    }


def write_report(report: CostReport, out_dir: Path, inputs: dict, seed: int,
                 scenario: ScenarioConfig) -> dict:
    """Write report JSON/CSV plus a manifest; only the manifest carries a timestamp."""
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    payload["manifest"] = "manifest.json"
    validate_report(payload)
    files = {"report_json": "report.json", "report_csv": "report.csv", "manifest": "manifest.json"}
    (out_dir / files["report_json"]).write_text(_dump(payload) + "\n")
    with open(out_dir / files["report_csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "component", "value", "unit"])
        for row in report.csv_rows():
            w.writerow([row[0], row[1], repr(float(row[2])), row[3]])
    manifest = {
        "schema_version": 1,
        "tool": "mtisim",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "inputs": inputs,
        "configuration": _scenario_echo(scenario),
        "outputs": {k: str(out_dir / v) for k, v in files.items()},
    }
    (out_dir / files["manifest"]).write_text(_dump(manifest) + "\n")
    return payload


def cmd_simulate(args) -> int:
    sc = _override(_load(args), args.placement, args.fmt, args.inferences_per_visit)
    baseline = None
    if args.baseline or args.baseline_placement or args.baseline_fmt:
        base = load_scenario(args.baseline, args.profile) if args.baseline else sc
        baseline = _override(base, args.baseline_placement, args.baseline_fmt,
                             args.inferences_per_visit)
    report = simulate(sc, baseline)
    payload = report.as_dict()
    if args.out_dir:
        inputs = {
            "scenario": str(args.scenario or default_scenario_path()),
            "profile": str(args.profile or default_profile_path()),
            "baseline": str(args.baseline) if args.baseline else None,
        }
        payload = write_report(report, Path(args.out_dir), inputs, args.seed, sc)
    rows = [{"metric": m, "component": c, "value": v, "unit": u} for m, c, v, u in report.csv_rows()]
    _emit(args, payload, rows)
    return EXIT_OK


def _sweep_one(job):
    path, profile, out_dir, seed = job
    sc = load_scenario(path, profile)
    report = simulate(sc)
    target = Path(out_dir) / Path(path).stem
    write_report(report, target, {"scenario": str(path), "profile": str(profile)}, seed, sc)
    return str(target)


def cmd_sweep(args) -> int:
    out = Path(args.out_dir or "sweep-out")
    stems = [Path(p).stem for p in args.scenarios]
    if len(set(stems)) != len(stems):
        raise UsageError("sweep scenarios must have distinct file names")
    jobs = [(p, args.profile, str(out), args.seed) for p in args.scenarios]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            dirs = list(pool.map(_sweep_one, jobs))
    else:
        dirs = [_sweep_one(j) for j in jobs]
    _emit(args, {"schema_version": 1, "outputs": dirs})
    return EXIT_OK


# ---------------------------------------------------------------- csp / vase

def cmd_csp(args) -> int:
    grid = read_sparsity_grid(args.grid)
    if args.p_embd is not None or args.p_tf is not None:
        if args.p_embd is None or args.p_tf is None:
            raise UsageError("--p-embd and --p-tf must be given together")
        p = (args.p_embd, args.p_tf)
    else:
        sc = _load(args)
        p = count_partition(sc.model, worst_case_task(sc.model, sc.tasks))
    best = find_csp_2d(grid, args.baseline, p)
    qualifying = any(g.accuracy >= args.baseline for g in grid)

    def point(g: SparsityPoint) -> dict:
        return {"s_embd": g.s_embd, "s_tf": g.s_tf, "accuracy": g.accuracy,
                "cumulative_sparsity": cumulative_sparsity(g.s_embd, g.s_tf, p)}

    p_embd, p_tf = (p.p_embd, p.p_tf) if hasattr(p, "p_embd") else p
    payload = {
        "schema_version": 1,
        "baseline": args.baseline,
        "p_embd": p_embd,
        "p_tf": p_tf,
        "best": point(best),
        "fallback": not qualifying,
        "embedding_only": point(axis_optimum(grid, args.baseline, p, "embd")),
        "transformer_only": point(axis_optimum(grid, args.baseline, p, "tf")),
    }
    _emit(args, payload, [point(best)])
    return EXIT_OK


def cmd_vase(args) -> int:
    grid = read_accuracy_grid(args.grid)
    size = vase_select(grid, args.baseline, args.mode)
    payload = {"schema_version": 1, "baseline": args.baseline, "mode": args.mode,
               "adapter_size": size, "accuracy": grid[size]}
    _emit(args, payload, [payload])
    return EXIT_OK


# ---------------------------------------------------------------- tensors

def cmd_encode(args) -> int:
    arr = _read_tensor(args.input)
    s = bitmask_encode(arr, args.fmt)
    save_sparse(s, args.output)
    payload = {"schema_version": 1, "rows": s.rows, "cols": s.cols, "value_bits": s.value_bits,
               "nonzeros": len(s.values), "output": str(args.output)}
    _emit(args, payload, [payload])
    return EXIT_OK


def cmd_decode(args) -> int:
    s = load_sparse(args.input, args.fmt)
    try:
        arr = bitmask_decode(s, args.deficit_policy)
    except BitmaskDeficitError as exc:
        raise SchemaError(f"{args.input}: {exc}") from exc
    _write_tensor(arr, args.output)
    payload = {"schema_version": 1, "rows": s.rows, "cols": s.cols, "value_bits": s.value_bits,
               "popcount": s.popcount(), "values": len(s.values), "output": str(args.output)}
    _emit(args, payload, [payload])
    return EXIT_OK


def cmd_quantize(args) -> int:
    arr = _read_tensor(args.input)
    out = quantize(arr, args.fmt)
    _write_tensor(out, args.output)
    payload = {"schema_version": 1, "format": args.fmt.name, "elements": int(arr.size),
               "changed": int(np.count_nonzero(out != arr)),
               "saturated": int(np.count_nonzero((arr > args.fmt.max_value) |
                                                 (arr < args.fmt.min_value)))
               if not args.fmt.is_float else 0,
               "output": str(args.output)}
    _emit(args, payload, [payload])
    return EXIT_OK


def cmd_inject(args) -> int:
    s = load_sparse(args.input)
    n = bit_length(s, args.target)
    if n == 0:
        raise SchemaError(f"{args.input}: no {args.target} bits to corrupt")
    pos = args.position
    if pos is None:
        pos = int(np.random.default_rng(args.seed).integers(0, n))
    if not 0 <= pos < n:
        raise UsageError(f"--position {pos} outside [0, {n}) for {args.target}")
    bad, corruption = inject_fault(s, args.target, pos)
    if args.output:
        save_sparse(bad, args.output)
    payload = {"schema_version": 1, "target": args.target, "position": pos,
               "corruption": corruption, "output": str(args.output) if args.output else None}
    _emit(args, payload, [payload])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=argparse.SUPPRESS,
                        help="scenario JSON (default: bundled 3-task scenario)")
    common.add_argument("--profile", default=argparse.SUPPRESS,
                        help="technology profile JSON (default: $MTISIM_PROFILE or bundled)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=["json", "csv", "table"], default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mtisim", parents=[common],
                                     description="Multi-task inference memory/performance model")
    parser.add_argument("--version", action="version", version=f"mtisim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("footprint", parents=[common], help="on-chip capacity per technology")
    p.add_argument("--placement", type=_placement)
    p.add_argument("--fmt", type=_fmt)
    p.add_argument("--accounting", choices=["paper-parity", "full"])
    p.set_defaults(func=cmd_footprint, default_format="table")

    p = sub.add_parser("simulate", parents=[common], help="area/energy/latency report")
    p.add_argument("--baseline", help="baseline scenario JSON for normalized ratios")
    p.add_argument("--baseline-placement", type=_placement)
    p.add_argument("--baseline-fmt", type=_fmt)
    p.add_argument("--placement", type=_placement)
    p.add_argument("--fmt", type=_fmt)
    p.add_argument("--inferences-per-visit", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="simulate several scenarios in parallel")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("csp", parents=[common], help="critical sparsity point from a grid CSV")
    p.add_argument("grid")
    p.add_argument("--baseline", type=float, required=True)
    p.add_argument("--p-embd", type=float)
    p.add_argument("--p-tf", type=float)
    p.set_defaults(func=cmd_csp)

    p = sub.add_parser("vase", parents=[common], help="adapter size from an accuracy CSV")
    p.add_argument("grid")
    p.add_argument("--baseline", type=float, required=True)
    p.add_argument("--mode", choices=["smallest-meeting", "argmax"], default="smallest-meeting")
    p.set_defaults(func=cmd_vase)

    p = sub.add_parser("encode", parents=[common], help="tensor (.npy/.csv) -> bitmask file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fmt", type=_fmt)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="bitmask file -> tensor (.npy/.csv)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fmt", type=_fmt, help="scale for 8/16-bit fixed-point codes")
    p.add_argument("--deficit-policy", choices=["error", "zero-fill"], default="error")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("quantize", parents=[common], help="quantize a tensor file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fmt", type=_fmt, required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("inject", parents=[common], help="flip one bit in a bitmask file")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.add_argument("--target", choices=["bitmask", "values"], required=True)
    p.add_argument("--position", type=int, help="bit index (default: random from --seed)")
    p.set_defaults(func=cmd_inject)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("scenario", None), ("profile", None), ("out_dir", None), ("seed", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if not hasattr(args, "format"):
        args.format = getattr(args, "default_format", "json")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mtisim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"mtisim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"mtisim: input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InvariantError as exc:
        print(f"mtisim: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
