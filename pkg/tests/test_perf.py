import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtisim.compression import FP32, Q3_5, Q3_13
from mtisim.model import ModelSpec, TaskSpec, count_partition, vanilla_trainable
from mtisim.perf import (
    Visit,
    compare,
    compute_work,
    inference_cost,
    provision_scenario,
    round_robin,
    run_scenario,
    switch_bytes,
    switch_cost,
    weight_traffic,
)

FORMATS = (FP32, Q3_13, Q3_5)


def itemized_macs(L, H, F, E, heads, layers, sizes):
    hd = H // heads
    per = {
        "q": L * H * H, "k": L * H * H, "v": L * H * H, "o": L * H * H,
        "scores": heads * L * L * hd, "context": heads * L * L * hd,
        "ffn_in": L * H * F, "ffn_out": L * F * H,
    }
    for i, s in enumerate(sizes):
        per[f"adapter{i}.down"] = L * H * s
        per[f"adapter{i}.up"] = L * s * H
    return layers * sum(per.values()) + L * E * H


def test_compute_work_itemized():
    m = ModelSpec()
    assert compute_work(m, 128, (64, 64)) == itemized_macs(128, 768, 3072, 128, 12, 12, (64, 64))
    assert compute_work(ModelSpec(num_layers=0), 128) == 128 * 128 * 768
    assert compute_work(m, 128, (0, 0)) == compute_work(m, 128)


@given(st.integers(1, 256))
def test_compute_time_superlinear_in_seq(L):
    m = ModelSpec()
    assert compute_work(m, 2 * L, (32, 32)) >= 2 * compute_work(m, L, (32, 32))


def single(scenario, task_id="mnli", **kw):
    return scenario.with_(schedule=[Visit(task_id, 1)], **kw)


def test_weight_traffic_hand_ledger(scenario):
    sc = single(scenario)
    t = sc.task("mnli")
    emb = (32 + 32 + 2) * 128 + 128 * 768 + 768
    enc = 7_084_800 * 12 + 590_592
    sram_params = (3072 * 12 + 256) + (768 * 3 + 3) + 12 * 2 * (2 * 768 * 32 + 32 + 768)
    traffic = weight_traffic(sc, t)
    assert traffic["MLC-RRAM"] == (emb + enc) * 0.5 * 4
    assert traffic["SLC-RRAM"] == (emb + enc) / 8
    assert traffic["SRAM"] == sram_params * 4
    _, plans = provision_scenario(sc)
    c = inference_cost(sc, plans, t)
    expected = traffic["SRAM"] * 8 * 0.08 + traffic["SLC-RRAM"] * 8 * 0.12 + traffic["MLC-RRAM"] * 8 * 0.2
    assert c.weight_energy_pj == pytest.approx(expected, rel=1e-12)
    assert c.compute_time_ns == compute_work(sc.model, 32, (32, 32)) / 256
    assert c.time_ns == max(c.compute_time_ns, c.weight_time_ns, c.activation_time_ns)
    leak = sum(p.leakage_nw for p in plans.values()) * c.time_ns * 1e-6
    assert c.leakage_energy_pj == pytest.approx(leak, rel=1e-12)


def test_default_report_regression(scenario):
    # first-run values of the bundled scenario and profile
    frozen = {
        "adapter-albert": (13.225, 757024888.4607501, 10959552.8832846),
        "vanilla-albert": (23.575, 3199831348.2873945, 13412792.780846858),
    }
    for pl, (area, energy, latency) in frozen.items():
        r = run_scenario(scenario.with_(placement=pl))
        assert r.area_mm2 == pytest.approx(area, rel=1e-12)
        assert r.energy_per_inference_pj == pytest.approx(energy, rel=1e-12)
        assert r.latency_per_inference_ns == pytest.approx(latency, rel=1e-12)
        assert r.switch_count == 3


def test_switch_cost_basics(scenario):
    _, plans = provision_scenario(scenario)
    a = scenario.task("mnli")
    assert switch_cost(a, a, scenario, plans) == (0.0, 0.0)
    big = TaskSpec("big", 2, (128, 128))
    small = TaskSpec("small", 2, (32, 32))
    sc = scenario.with_(tasks=[big, small], schedule=round_robin(["big", "small"]))
    _, plans = provision_scenario(sc)
    assert switch_cost(small, big, sc, plans)[0] > switch_cost(big, small, sc, plans)[0]


def test_switch_bytes_ratio_tracks_counts(scenario):
    t = TaskSpec("t", 2, (64, 64))
    sc = scenario.with_(tasks=[t], schedule=[Visit("t")], sparsity={})
    a = switch_bytes(sc.with_(placement="adapter-albert"), t)
    v = switch_bytes(sc.with_(placement="vanilla-albert"), t)
    counts = count_partition(sc.model, t).task_specific / vanilla_trainable(sc.model, t)
    assert a / v == pytest.approx(counts, rel=0.05)


def test_single_task_equals_steady_state(scenario):
    for pl in ("adapter-albert", "vanilla-albert"):
        sc = single(scenario, "qqp", placement=pl).with_(schedule=[Visit("qqp", 5)])
        r = run_scenario(sc)
        _, plans = provision_scenario(sc)
        c = inference_cost(sc, plans, sc.task("qqp"))
        assert r.switch_count == 0
        assert r.energy_per_inference_pj == pytest.approx(c.energy_pj, rel=1e-12)
        assert r.latency_per_inference_ns == pytest.approx(c.time_ns, rel=1e-12)


@pytest.mark.parametrize("fmt", FORMATS, ids=lambda f: f.name)
def test_adapter_dominates_vanilla(scenario, fmt):
    a = run_scenario(scenario.with_(placement="adapter-albert", fmt=fmt))
    v = run_scenario(scenario.with_(placement="vanilla-albert", fmt=fmt))
    ratios = compare(a, v)
    assert all(x > 1 for x in ratios.values()), ratios


def energy_ratio(scenario, ipv, fmt=FP32):
    order = [t.task_id for t in scenario.tasks]
    sc = scenario.with_(schedule=round_robin(order, ipv), fmt=fmt)
    a = run_scenario(sc.with_(placement="adapter-albert"))
    v = run_scenario(sc.with_(placement="vanilla-albert"))
    return compare(a, v)["energy"]


def test_energy_gap_shrinks_with_longer_visits(scenario):
    ratios = [energy_ratio(scenario, n) for n in (1, 2, 4, 8, 16, 64)]
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))


def test_quantized_adapter_vs_fp32_vanilla_ordering(scenario):
    v = run_scenario(scenario.with_(placement="vanilla-albert", fmt=FP32))
    a32 = run_scenario(scenario.with_(placement="adapter-albert", fmt=FP32))
    a5 = run_scenario(scenario.with_(placement="adapter-albert", fmt=Q3_5))
    assert compare(a5, v)["energy"] > compare(a32, v)["energy"]


def test_compare_identity_and_zero(scenario):
    r = run_scenario(scenario)
    assert compare(r, r) == {"area": 1.0, "energy": 1.0, "latency": 1.0}


@settings(max_examples=10, deadline=None)
@given(seq=st.integers(4, 128), ipv=st.integers(1, 8),
       pl=st.sampled_from(["adapter-albert", "vanilla-albert"]))
def test_ledger_closure_and_monotone(scenario, seq, ipv, pl):
    order = [t.task_id for t in scenario.tasks]
    sc = scenario.with_(placement=pl, seq_len=seq, schedule=round_robin(order, ipv))
    r = run_scenario(sc)
    assert r.energy_per_inference_pj == sum(r.energy_breakdown_pj.values())
    assert r.latency_per_inference_ns == sum(r.latency_breakdown_ns.values())
    assert r.area_mm2 == sum(r.area_breakdown_mm2.values())
    assert all(v >= 0 for v in r.energy_breakdown_pj.values())
    longer = run_scenario(sc.with_(seq_len=seq + 8))
    assert longer.energy_per_inference_pj >= r.energy_per_inference_pj
    assert longer.latency_per_inference_ns >= r.latency_per_inference_ns
    fewer_switches = run_scenario(sc.with_(schedule=round_robin(order, ipv + 1)))
    assert fewer_switches.energy_per_inference_pj <= r.energy_per_inference_pj


def test_schedule_validation(scenario):
    with pytest.raises(ValueError):
        scenario.with_(schedule=[])
    with pytest.raises(ValueError):
        scenario.with_(schedule=[Visit("nope")])
