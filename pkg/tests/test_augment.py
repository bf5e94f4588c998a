import numpy as np
import pytest
from scipy import stats as scipy_stats

from trafficaug.augment import (
    BalancePlan,
    ClassSynthesizer,
    SynthesizerConfig,
    augment_dataset,
    build_synthesizer,
    default_balance_plan,
    oversample_dataset,
    plan_from_counts,
    synthesize_flow,
    synthesizers_from_bundle_obj,
    synthesizers_to_bundle_obj,
)
from trafficaug.density import GaussianKde
from trafficaug.flows import Dataset, Transport, dataset_to_json, flow_violations
from synthdata import make_flow

FAST = SynthesizerConfig(min_flows=10, hidden_size=8, epochs=5)


def tcp_class_dataset(n=40, label="web", rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    flows = []
    for _ in range(n):
        length = int(rng.integers(2, 8))
        directions = [1] + [int(rng.integers(0, 2)) for _ in range(length - 1)]
        windows = [int(rng.choice([4096, 8192, 16384]))] * length
        iats = [0.0] + list(rng.uniform(0.4, 0.8, size=length - 1))
        payloads = rng.integers(400, 1200, size=length)
        flows.append(make_flow(directions, label=label, windows=windows,
                               iats=iats, payloads=payloads,
                               dst_port=443, src_port=int(rng.integers(30000, 60000))))
    return Dataset.from_flows(flows)


def udp_class_dataset(n=30, label="voice"):
    rng = np.random.default_rng(1)
    flows = []
    for _ in range(n):
        length = int(rng.integers(2, 6))
        directions = [1] + [int(rng.integers(0, 2)) for _ in range(length - 1)]
        flows.append(make_flow(directions, label=label, windows=[0] * length,
                               transport=Transport.UDP,
                               iats=[0.0] + [0.5] * (length - 1),
                               payloads=[160] * length, dst_port=5060))
    return Dataset.from_flows(flows)


# ---------------------------------------------------------------------------
# building synthesizers

def test_build_synthesizer_structure():
    synth = build_synthesizer(tcp_class_dataset(), "web", FAST, random_state=0)
    assert synth.window_generator is not None
    assert set(synth.kdes) == {"src_port", "dst_port", "inter_arrival_time", "payload_length"}


def test_build_synthesizer_min_flows():
    with pytest.raises(ValueError, match="min_flows"):
        build_synthesizer(tcp_class_dataset(n=5), "web", FAST)


def test_udp_only_class_degrades_with_warning():
    ds = udp_class_dataset()
    with pytest.warns(UserWarning, match="tcp_window=0"):
        synth = build_synthesizer(ds, "voice", FAST, random_state=0)
    assert synth.window_generator is None
    flow = synthesize_flow(synth, np.random.default_rng(0))
    assert all(p.tcp_window == 0 for p in flow.packets)
    assert flow.key.transport is Transport.UDP


def test_inter_arrival_kde_excludes_first_packets():
    # every non-first inter-arrival is >= 0.4, so no structural zeros may leak in
    ds = tcp_class_dataset()
    synth = build_synthesizer(ds, "web", FAST, random_state=0)
    samples = synth.kdes["inter_arrival_time"].samples_
    assert samples.min() >= 0.4
    expected_count = sum(f.n_real_packets - 1 for f in ds.flows)
    assert samples.size == expected_count


def test_single_packet_only_class_gets_zero_iat_kde():
    flows = [make_flow([1], label="ping", src_port=1000 + i) for i in range(15)]
    synth = build_synthesizer(Dataset.from_flows(flows), "ping", FAST, random_state=0)
    assert synth.kdes["inter_arrival_time"].samples_.tolist() == [0.0]


# ---------------------------------------------------------------------------
# flow synthesis

class StubGenerator:
    def __init__(self, sequence):
        self.sequence = list(sequence)

    def generate(self, random_state=None, first_dist=None, max_steps=19):
        return list(self.sequence)


def stub_synthesizer(directions, windows=None, port=443.0):
    kde = lambda vals: GaussianKde(bandwidth=1e-9).fit(vals)
    return ClassSynthesizer(
        class_name="stub",
        direction_generator=StubGenerator(directions),
        window_generator=None if windows is None else StubGenerator(windows),
        kdes={"src_port": kde([40000.0]), "dst_port": kde([port]),
              "inter_arrival_time": kde([0.5]), "payload_length": kde([700.0])},
    )


def test_synthesize_minimal_flow_pads_nineteen_columns():
    synth = stub_synthesizer([1])
    flow = synthesize_flow(synth, np.random.default_rng(0))
    assert flow.n_real_packets == 1
    assert np.all(flow.matrix()[:, 1:] == 0)


def test_window_sequence_truncated_to_direction_length():
    synth = stub_synthesizer([1, 0, 1], windows=[100, 200, 300, 400, 500])
    flow = synthesize_flow(synth, np.random.default_rng(0))
    assert [p.tcp_window for p in flow.packets] == [100, 200, 300]


def test_window_sequence_extended_by_repeating_last():
    synth = stub_synthesizer([1, 0, 1, 1], windows=[100, 200])
    flow = synthesize_flow(synth, np.random.default_rng(0))
    assert [p.tcp_window for p in flow.packets] == [100, 200, 200, 200]


def test_leading_direction_forced_to_one():
    synth = stub_synthesizer([0, 0, 1], windows=[1, 1, 1])
    flow = synthesize_flow(synth, np.random.default_rng(0))
    assert flow.packets[0].direction == 1


def test_degenerate_port_kde_replicates():
    ds = tcp_class_dataset()
    synth = build_synthesizer(ds, "web", FAST, random_state=0)
    synth.kdes["dst_port"] = GaussianKde(bandwidth="silverman").fit([443.0] * 200)
    rng = np.random.default_rng(2)
    hits = total = 0
    for _ in range(200):
        flow = synthesize_flow(synth, rng)
        hits += sum(1 for p in flow.packets if p.dst_port == 443)
        total += flow.n_real_packets
    assert hits / total >= 0.99


def test_synthesized_flows_satisfy_invariants_in_bulk():
    synth = build_synthesizer(tcp_class_dataset(), "web", FAST, random_state=0)
    rng = np.random.default_rng(3)
    for _ in range(300):
        flow = synthesize_flow(synth, rng)
        assert flow_violations(flow) == []
        assert flow.synthetic
        assert 1 <= flow.n_real_packets <= 20


def test_synthesized_numeric_features_match_kde_mixture():
    synth = build_synthesizer(tcp_class_dataset(n=60), "web", FAST, random_state=0)
    rng = np.random.default_rng(4)
    payloads, iats = [], []
    while len(payloads) < 10_000:
        flow = synthesize_flow(synth, rng)
        payloads.extend(p.payload_length for p in flow.packets)
        iats.extend(p.inter_arrival_time for p in flow.packets[1:])
    direct_payload = synth.kdes["payload_length"].sample(10_000, np.random.default_rng(5))
    ks = scipy_stats.ks_2samp(payloads[:10_000], direct_payload).statistic
    assert ks <= 0.03
    direct_iat = synth.kdes["inter_arrival_time"].sample(len(iats), np.random.default_rng(6))
    ks = scipy_stats.ks_2samp(iats, direct_iat).statistic
    assert ks <= 0.03


# ---------------------------------------------------------------------------
# plans, augmentation, oversampling

def two_class_dataset(n_a=30, n_b=12):
    a = tcp_class_dataset(n=n_a, label="a").flows
    b = tcp_class_dataset(n=n_b, label="b", rng_seed=9).flows
    return Dataset.from_flows(a + b)


def test_plan_from_counts_median():
    counts = {
        "HTTP": 58774, "DNS": 126960, "NTP": 4633, "BitTorrent": 6146,
        "HTTP_Download": 16326, "SSL_No_Cert": 10603, "Steam": 4460, "RDP": 1425,
        "SSL": 341846, "SSH": 9746, "Facebook": 2772, "Twitter": 2198,
        "Google": 96072, "WindowsUpdate": 2343, "Telegram": 186256,
        "Instagram": 6683, "Microsoft": 18196, "PlayStore": 5304, "YouTube": 3747,
    }
    picked = ["NTP", "Facebook", "Twitter", "WindowsUpdate", "Instagram",
              "PlayStore", "YouTube"]
    plan = plan_from_counts(counts, picked, "median")
    # sorted counts, middle (10th of 19) element
    assert sorted(counts.values())[9] == 6683
    assert all(plan.targets[c] == 6683 for c in picked)


def test_plan_fixed_strategy_max_rule():
    counts = {"big": 6146, "small": 1425}
    plan = plan_from_counts(counts, ["big", "small"], "fixed:5000")
    assert plan.targets == {"big": 6146, "small": 5000}


def test_plan_validation():
    with pytest.raises(ValueError):
        plan_from_counts({"a": 1}, [], "median")
    with pytest.raises(ValueError):
        plan_from_counts({"a": 1}, ["zzz"], "median")
    with pytest.raises(ValueError):
        plan_from_counts({"a": 1}, ["a"], "upside-down")


def test_default_balance_plan_on_dataset():
    ds = two_class_dataset(n_a=30, n_b=12)
    plan = default_balance_plan(ds, ["b"], "median")
    assert plan.targets == {"b": 21}  # median of {30, 12}


def test_augment_dataset_count_exact():
    ds = two_class_dataset()
    synths = {"b": build_synthesizer(ds, "b", FAST, random_state=0)}
    out = augment_dataset(ds, BalancePlan(targets={"b": 30}), synths,
                          np.random.default_rng(0))
    assert len(out) == len(ds) + 18
    added = out.flows[len(ds):]
    assert all(f.label == "b" and f.synthetic for f in added)
    assert out.flows[:len(ds)] == ds.flows  # originals untouched


def test_augment_empty_plan_is_identity():
    ds = two_class_dataset()
    out = augment_dataset(ds, BalancePlan(targets={}), {}, np.random.default_rng(0))
    assert out == ds


def test_augment_plan_below_current_errors():
    ds = two_class_dataset()
    synths = {"b": build_synthesizer(ds, "b", FAST, random_state=0)}
    with pytest.raises(ValueError, match="below current"):
        augment_dataset(ds, BalancePlan(targets={"b": 3}), synths, np.random.default_rng(0))


def test_augment_missing_synthesizer_errors():
    ds = two_class_dataset()
    with pytest.raises(ValueError, match="synthesizer"):
        augment_dataset(ds, BalancePlan(targets={"b": 30}), {}, np.random.default_rng(0))


def test_oversample_duplicates_originals():
    ds = two_class_dataset(n_a=20, n_b=10)
    out = oversample_dataset(ds, BalancePlan(targets={"b": 30}), np.random.default_rng(0))
    added = out.flows[len(ds):]
    assert len(added) == 20
    originals = set(ds.flows_of_class("b"))
    assert all(f in originals for f in added)
    assert not any(f.synthetic for f in added)


def test_oversample_deterministic():
    ds = two_class_dataset()
    plan = BalancePlan(targets={"b": 40})
    a = oversample_dataset(ds, plan, np.random.default_rng(7))
    b = oversample_dataset(ds, plan, np.random.default_rng(7))
    assert dataset_to_json(a) == dataset_to_json(b)


# ---------------------------------------------------------------------------
# bundle round trip

def test_bundle_round_trip_reproduces_synthesis():
    import json
    ds = two_class_dataset()
    synths = {"b": build_synthesizer(ds, "b", FAST, random_state=3)}
    obj = json.loads(json.dumps(synthesizers_to_bundle_obj(synths, FAST)))
    restored, config = synthesizers_from_bundle_obj(obj)
    assert config == FAST
    a = [synthesize_flow(synths["b"], np.random.default_rng(11)) for _ in range(5)]
    b = [synthesize_flow(restored["b"], np.random.default_rng(11)) for _ in range(5)]
    assert a == b
