import csv
import json
import random
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from mtisim import cli
from mtisim.compression import SparsityPoint, cumulative_sparsity
from mtisim.config import COMMAND_SCHEMAS, data_path, default_scenario_path, validate_command_output
from mtisim.memory import footprint


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_footprint_matches_module(capsys, scenario):
    doc = run_json(capsys, "footprint", "--format", "json")
    assert len(doc["rows"]) == 6
    for row in doc["rows"]:
        from mtisim.compression import parse_format
        s = scenario.sparsity[row["placement"]]
        ref = footprint(scenario.model, scenario.tasks, *s, parse_format(row["format"]), row["placement"])
        assert (row["mlc_bytes"], row["slc_bytes"], row["sram_bytes"]) == (
            ref.mlc_bytes, ref.slc_bytes, ref.sram_bytes)


def test_footprint_filtered_single_row(capsys):
    doc = run_json(capsys, "footprint", "--placement", "vanilla", "--fmt", "q3_5", "--format", "json")
    assert [(r["placement"], r["format"]) for r in doc["rows"]] == [("vanilla-albert", "q3_5")]
    code, out, _ = run(capsys, "footprint", "--placement", "vanilla", "--fmt", "q3_5")
    assert code == 0 and len(out.strip().splitlines()) == 2


def test_malformed_scenario_names_field(capsys, tmp_path):
    doc = json.loads(default_scenario_path().read_text())
    doc["tasks"][0]["num_labels"] = "three"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(capsys, "--scenario", str(p), "simulate")
    assert code == 3 and "tasks.0.num_labels" in err
    p.write_text("{not json")
    code, _, err = run(capsys, "simulate", "--scenario", str(p))
    assert code == 3 and "invalid JSON" in err


def test_exit_codes(capsys, tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--placement", "hybrid"])
    assert exc.value.code == 2
    code, _, _ = run(capsys, "simulate", "--scenario", str(tmp_path / "missing.json"))
    assert code == 2
    real = cli.run_scenario

    def broken(sc):
        r = real(sc)
        return replace(r, energy_per_inference_pj=r.energy_per_inference_pj + 1)

    monkeypatch.setattr(cli, "run_scenario", broken)
    code, _, err = run(capsys, "simulate")
    assert code == 4 and "invariant" in err


def test_simulate_ratios(capsys):
    plain = run_json(capsys, "simulate")
    assert "ratios_vs_baseline" not in plain
    vs_vanilla = run_json(capsys, "simulate", "--baseline-placement", "vanilla")
    assert all(v > 1 for v in vs_vanilla["ratios_vs_baseline"].values())
    same = run_json(capsys, "simulate", "--baseline", str(default_scenario_path()))
    assert same["ratios_vs_baseline"] == {"area": 1.0, "energy": 1.0, "latency": 1.0}


def test_simulate_writes_deterministic_reports(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "simulate", "--out-dir", str(tmp_path / d), "--seed", "7")[0] == 0
    for name in ("report.json", "report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    manifest = json.loads((tmp_path / "a" / report["manifest"]).read_text())
    assert manifest["seed"] == 7 and "created_utc" in manifest
    assert "created_utc" not in report
    rows = list(csv.DictReader(open(tmp_path / "a" / "report.csv")))
    total = [r for r in rows if r["metric"] == "energy_per_inference" and r["component"] == "total"]
    assert float(total[0]["value"]) == report["energy_per_inference_pj"]


def test_simulate_overrides(capsys):
    doc = run_json(capsys, "simulate", "--placement", "vanilla", "--fmt", "q3_13",
                   "--inferences-per-visit", "4")
    assert (doc["placement"], doc["format"], doc["total_inferences"]) == ("vanilla-albert", "q3_13", 12)


def test_profile_env(capsys, monkeypatch, tmp_path):
    prof = json.loads(data_path("default_profile.json").read_text())
    prof["technologies"]["SRAM"]["area_mm2_per_mib"] *= 2
    p = tmp_path / "p.json"
    p.write_text(json.dumps(prof))
    base = run_json(capsys, "simulate")
    monkeypatch.setenv("MTISIM_PROFILE", str(p))
    doubled = run_json(capsys, "simulate")
    assert doubled["area_breakdown_mm2"]["SRAM"] == 2 * base["area_breakdown_mm2"]["SRAM"]
    del prof["technologies"]["DRAM"]
    p.write_text(json.dumps(prof))
    assert run(capsys, "simulate")[0] == 3


def test_csp_fixture(capsys, sparsity_grid_path):
    doc = run_json(capsys, "csp", str(sparsity_grid_path), "--baseline", "84.2")
    best = doc["best"]["cumulative_sparsity"]
    assert best > doc["embedding_only"]["cumulative_sparsity"]
    assert best > doc["transformer_only"]["cumulative_sparsity"]
    assert doc["fallback"] is False


def write_grid(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s_embd", "s_tf", "accuracy"])
        w.writerows(rows)


def test_csp_single_row_and_random(capsys, tmp_path):
    g = tmp_path / "g.csv"
    write_grid(g, [(0.4, 0.2, 90.0)])
    doc = run_json(capsys, "csp", str(g), "--baseline", "89", "--p-embd", "0.4", "--p-tf", "0.6")
    assert (doc["best"]["s_embd"], doc["best"]["s_tf"]) == (0.4, 0.2)
    doc = run_json(capsys, "csp", str(g), "--baseline", "95", "--p-embd", "0.4", "--p-tf", "0.6")
    assert doc["fallback"] and (doc["best"]["s_embd"], doc["best"]["s_tf"]) == (0, 0)
    rnd = random.Random(3)
    rows = [(e / 10, t / 10, round(rnd.uniform(85, 95), 2)) for e in range(0, 10, 3) for t in range(0, 10, 3)]
    write_grid(g, rows)
    doc = run_json(capsys, "csp", str(g), "--baseline", "90", "--p-embd", "0.35", "--p-tf", "0.65")
    oracle = max(cumulative_sparsity(e, t, (0.35, 0.65)) for e, t, a in rows if a >= 90)
    assert doc["best"]["cumulative_sparsity"] == pytest.approx(oracle, abs=1e-15)


def test_csp_needs_both_fractions(capsys, sparsity_grid_path):
    assert run(capsys, "csp", str(sparsity_grid_path), "--baseline", "84", "--p-embd", "0.3")[0] == 2


def test_vase(capsys):
    doc = run_json(capsys, "vase", str(data_path("vase_grid.csv")), "--baseline", "90")
    assert doc["adapter_size"] == 64


@pytest.mark.parametrize("dtype,fmt", [(np.float64, None), (np.float32, None), (np.float64, "q3_13")])
def test_encode_decode_files(capsys, tmp_path, dtype, fmt):
    rng = np.random.default_rng(0)
    t = rng.normal(size=(7, 9)).astype(dtype)
    t[rng.random(t.shape) < 0.6] = 0
    if fmt:
        from mtisim.compression import Q3_13, quantize
        t = quantize(t, Q3_13)
    src, packed, back = tmp_path / "t.npy", tmp_path / "t.smask", tmp_path / "back.npy"
    np.save(src, t)
    extra = ["--fmt", fmt] if fmt else []
    enc = run_json(capsys, "encode", str(src), str(packed), *extra)
    assert enc["nonzeros"] == np.count_nonzero(t)
    run_json(capsys, "decode", str(packed), str(back), *extra)
    assert back.read_bytes() == src.read_bytes()


def test_decode_deficit_policy(capsys, tmp_path):
    np.save(tmp_path / "t.npy", np.array([[1.0, 0, 2.0, 0]]))
    run_json(capsys, "encode", str(tmp_path / "t.npy"), str(tmp_path / "t.smask"))
    run_json(capsys, "inject", str(tmp_path / "t.smask"), str(tmp_path / "bad.smask"),
             "--target", "bitmask", "--position", "1")
    assert run(capsys, "decode", str(tmp_path / "bad.smask"), str(tmp_path / "o.npy"))[0] == 3
    run_json(capsys, "decode", str(tmp_path / "bad.smask"), str(tmp_path / "o.npy"),
             "--deficit-policy", "zero-fill")
    assert np.load(tmp_path / "o.npy").tolist() == [[1.0, 2.0, 0.0, 0.0]]


def test_quantize_passthrough_and_q3_5(capsys, tmp_path):
    x = np.array([[0.123456789, -5.0, 3.3]])
    np.save(tmp_path / "x.npy", x)
    doc = run_json(capsys, "quantize", str(tmp_path / "x.npy"), str(tmp_path / "y.npy"), "--fmt", "fp32")
    assert doc["changed"] == 0
    assert (tmp_path / "y.npy").read_bytes() == (tmp_path / "x.npy").read_bytes()
    doc = run_json(capsys, "quantize", str(tmp_path / "x.npy"), str(tmp_path / "z.npy"), "--fmt", "q3_5")
    assert doc["saturated"] == 1
    assert np.load(tmp_path / "z.npy").tolist() == [[0.125, -4.0, 3.3125]]


def test_inject_values(capsys, tmp_path):
    np.save(tmp_path / "t.npy", np.arange(12.0).reshape(3, 4))
    run_json(capsys, "encode", str(tmp_path / "t.npy"), str(tmp_path / "t.smask"))
    doc = run_json(capsys, "inject", str(tmp_path / "t.smask"), "--target", "values", "--seed", "4")
    assert doc["corruption"] == 1
    assert run(capsys, "inject", str(tmp_path / "t.smask"), "--target", "values", "--position", "99999")[0] == 2


def test_sweep_pool(capsys, tmp_path):
    doc = json.loads(default_scenario_path().read_text())
    paths = []
    for pl in ("adapter-albert", "vanilla-albert"):
        doc["placement"] = pl
        p = tmp_path / f"{pl}.json"
        p.write_text(json.dumps(doc))
        paths.append(str(p))
    out = run_json(capsys, "sweep", *paths, "--workers", "2", "--out-dir", str(tmp_path / "out"))
    reports = [json.loads((tmp_path / "out" / f"{pl}" / "report.json").read_text())
               for pl in ("adapter-albert", "vanilla-albert")]
    assert len(out["outputs"]) == 2
    assert reports[0]["area_mm2"] < reports[1]["area_mm2"]


def test_every_command_has_a_schema():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == set(COMMAND_SCHEMAS)
    with pytest.raises(Exception):
        validate_command_output("inject", {"schema_version": 1})


def test_csv_output(capsys):
    code, out, _ = run(capsys, "simulate", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "metric,component,value,unit"


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "mtisim.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "mtisim" in proc.stdout


def test_sparsity_point_validation():
    with pytest.raises(ValueError):
        SparsityPoint(1.5, 0, 90)
