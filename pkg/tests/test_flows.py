import json
import math

import numpy as np
import pytest

from trafficaug.exceptions import DatasetFormatError, IngestError
from trafficaug.flows import (
    Dataset,
    FiveTuple,
    FlowRecord,
    PacketFeatureVector,
    Transport,
    class_stats,
    dataset_from_json,
    dataset_to_json,
    flow_violations,
    ingest_packets,
    load_flows,
    save_flows,
    split,
    stats_from_counts,
)
from synthdata import make_flow

HEADER = "ts,src_ip,dst_ip,src_port,dst_port,proto,tcp_window,payload_len,label"


def csv_lines(rows):
    return [HEADER] + rows


def row(ts, src="10.0.0.1", dst="10.0.0.2", sport=1234, dport=80, proto="tcp",
        window=8192, payload=100, label="web"):
    return f"{ts},{src},{dst},{sport},{dport},{proto},{window},{payload},{label}"


def test_three_packets_one_flow_inter_arrivals():
    lines = csv_lines([row(100.0), row(100.5), row(101.2)])
    ds = ingest_packets(lines)
    assert len(ds) == 1
    iats = [p.inter_arrival_time for p in ds.flows[0].packets]
    assert iats == pytest.approx([0.0, 0.5, 0.7])


def test_flow_truncated_at_twenty_packets():
    lines = csv_lines([row(100.0 + 0.1 * i) for i in range(25)])
    ds = ingest_packets(lines)
    assert len(ds) == 1
    assert ds.flows[0].n_real_packets == 20
    assert len(ds.flows[0].packets) == 20


def test_idle_timeout_splits_flows():
    lines = csv_lines([row(100.0), row(100.0 + 60.0 + 0.001)])
    ds = ingest_packets(lines, idle_timeout=60.0)
    assert len(ds) == 2
    # a gap of exactly the timeout does NOT split
    lines = csv_lines([row(100.0), row(160.0)])
    assert len(ingest_packets(lines, idle_timeout=60.0)) == 1


def reference_grouper(parsed_rows, timeout):
    """Independent single-pass oracle: returns per-flow packet counts by key."""
    flows = []
    state = {}  # bikey -> [count, last_ts]
    for ts, src, dst, proto in parsed_rows:
        bikey = (min(src, dst), max(src, dst), proto)
        if bikey in state and ts - state[bikey][1] > timeout:
            flows.append((bikey, state.pop(bikey)[0]))
        if bikey not in state:
            state[bikey] = [1, ts]
        else:
            state[bikey][0] += 1
            state[bikey][1] = max(state[bikey][1], ts)
    flows.extend((k, v[0]) for k, v in state.items())
    return sorted((k, min(c, 20)) for k, c in flows)


def test_grouping_matches_reference_oracle():
    rng = np.random.default_rng(7)
    endpoints = [("10.0.0.1", 1000), ("10.0.0.2", 2000), ("10.0.0.3", 3000)]
    lines = []
    parsed = []
    ts = 0.0
    for _ in range(400):
        ts += float(rng.exponential(3.0))
        a, b = rng.choice(len(endpoints), size=2, replace=False)
        src, dst = endpoints[a], endpoints[b]
        lines.append(row(ts, src=src[0], dst=dst[0], sport=src[1], dport=dst[1]))
        parsed.append((ts, src, dst, "tcp"))
    ds = ingest_packets(csv_lines(lines), idle_timeout=10.0)
    expected = reference_grouper(parsed, timeout=10.0)
    got = sorted(
        ((min((f.key.src_addr, f.key.src_port), (f.key.dst_addr, f.key.dst_port)),
          max((f.key.src_addr, f.key.src_port), (f.key.dst_addr, f.key.dst_port)),
          f.key.transport.value), f.n_real_packets)
        for f in ds.flows)
    assert got == expected


def test_orientation_fixed_by_first_packet():
    lines = csv_lines([
        row(1.0, src="10.0.0.9", dst="10.0.0.2", sport=5555, dport=80),
        row(1.1, src="10.0.0.2", dst="10.0.0.9", sport=80, dport=5555),
        row(1.2, src="10.0.0.9", dst="10.0.0.2", sport=5555, dport=80),
    ])
    flow = ingest_packets(lines).flows[0]
    assert flow.key.src_addr == "10.0.0.9" and flow.key.src_port == 5555
    assert [p.direction for p in flow.packets] == [1, 0, 1]
    assert flow.packets[0].inter_arrival_time == 0.0
    # reply packets keep their observed ports
    assert flow.packets[1].src_port == 80 and flow.packets[1].dst_port == 5555


def test_ingest_interleaving_insensitive():
    a = [row(1.0 + i, src="10.0.0.1", dst="10.0.0.2", sport=1111, dport=80, label="a")
         for i in range(3)]
    b = [row(1.5 + i, src="10.0.0.3", dst="10.0.0.4", sport=2222, dport=443, label="b")
         for i in range(3)]
    interleaved = [a[0], b[0], a[1], b[1], a[2], b[2]]
    grouped = a + b
    assert ingest_packets(csv_lines(interleaved)) == ingest_packets(csv_lines(grouped))


@pytest.mark.parametrize("bad,fragment", [
    (row(1.0, sport=70000), "port"),
    (row(1.0, proto="sctp"), "transport"),
    (row(1.0, proto="udp", window=100), "udp"),
    (row(1.0, label=""), "label"),
    ("1.0,10.0.0.1,10.0.0.2,80", "fields"),
    ("oops,10.0.0.1,10.0.0.2,1,2,tcp,0,0,x", "float"),
])
def test_malformed_rows_carry_line_numbers(bad, fragment):
    lines = csv_lines([row(0.5), bad])
    with pytest.raises(IngestError) as err:
        ingest_packets(lines)
    assert "line 3" in str(err.value)
    assert fragment.lower() in str(err.value).lower()


def test_bad_header_rejected():
    with pytest.raises(IngestError):
        ingest_packets(["ts,src_ip", row(1.0)])


# ---------------------------------------------------------------------------
# invariants and the matrix view

def test_flow_record_invariants_enforced():
    with pytest.raises(ValueError):
        make_flow([0, 1])  # first packet must be initiator-to-responder
    with pytest.raises(ValueError):
        make_flow([1] * 21)
    with pytest.raises(ValueError):
        make_flow([1, 1], iats=[0.5, 0.1])  # first inter-arrival must be 0
    with pytest.raises(ValueError):
        make_flow([1, 1], windows=[1, 1], transport=Transport.UDP)
    flow = make_flow([1, 0, 1])
    assert flow_violations(flow) == []


def test_matrix_view_shape_and_padding():
    flow = make_flow([1, 0, 1], windows=[10, 20, 30], payloads=[5, 6, 7])
    m = flow.matrix()
    assert m.shape == (6, 20)
    assert m[0, :3].tolist() == [1, 0, 1]
    assert m[1, :3].tolist() == [10, 20, 30]
    assert np.all(m[:, 3:] == 0)


def test_packet_feature_vector_validation():
    with pytest.raises(ValueError):
        PacketFeatureVector(direction=2, tcp_window=0, src_port=1, dst_port=1,
                            inter_arrival_time=0.0, payload_length=0)
    with pytest.raises(ValueError):
        PacketFeatureVector(direction=1, tcp_window=-1, src_port=1, dst_port=1,
                            inter_arrival_time=0.0, payload_length=0)
    with pytest.raises(ValueError):
        PacketFeatureVector(direction=1, tcp_window=0, src_port=1, dst_port=1,
                            inter_arrival_time=-0.1, payload_length=0)


def test_dataset_class_index_contiguous():
    flow = make_flow([1], label="a")
    with pytest.raises(ValueError):
        Dataset(flows=(flow,), class_index={"a": 1})
    with pytest.raises(ValueError):
        Dataset(flows=(flow,), class_index={"b": 0})


# ---------------------------------------------------------------------------
# statistics

def test_class_stats_small_exact():
    flows = [make_flow([1], label="a") for _ in range(3)]
    flows += [make_flow([1], label="b") for _ in range(1)]
    stats = class_stats(Dataset.from_flows(flows))
    assert stats.total == 4
    assert stats.counts == {"a": 3, "b": 1}
    assert stats.percentages["a"] == pytest.approx(75.0)
    assert abs(sum(stats.percentages.values()) - 100.0) < 1e-9


def test_class_stats_empty_dataset_errors():
    with pytest.raises(ValueError):
        class_stats(Dataset(flows=(), class_index={}))


def test_stats_from_counts_shares():
    stats = stats_from_counts({"x": 1, "y": 3})
    assert stats.percentages == {"x": 25.0, "y": 75.0}


# ---------------------------------------------------------------------------
# splitting

def dataset_of(sizes):
    flows = []
    for name, n in sizes.items():
        flows += [make_flow([1, 0], label=name, src_port=40000 + i) for i in range(n)]
    return Dataset.from_flows(flows)


def test_split_exact_fraction():
    train, test = split(dataset_of({"a": 100}), 0.85, seed=0)
    assert len(train) == 85 and len(test) == 15


def test_split_floor_per_class():
    # floor(0.85*10)=8, floor(0.85*7)=5; remainders go to test
    train, test = split(dataset_of({"a": 10, "b": 7}), 0.85, seed=3)
    t = class_stats(train).counts
    v = class_stats(test).counts
    assert t == {"a": 8, "b": 5}
    assert v == {"a": 2, "b": 2}


def test_split_fraction_bounds():
    ds = dataset_of({"a": 10})
    with pytest.raises(ValueError):
        split(ds, 1.0, seed=0)
    with pytest.raises(ValueError):
        split(ds, 0.0, seed=0)


def test_split_small_class_named_in_error():
    flows = [make_flow([1], label="big", src_port=1000 + i) for i in range(5)]
    flows.append(make_flow([1], label="tiny"))
    with pytest.raises(ValueError, match="tiny"):
        split(Dataset.from_flows(flows), 0.85, seed=0)


def test_split_deterministic_and_partition():
    ds = dataset_of({"a": 20, "b": 9})
    t1, v1 = split(ds, 0.7, seed=42)
    t2, v2 = split(ds, 0.7, seed=42)
    assert dataset_to_json(t1) == dataset_to_json(t2)
    assert dataset_to_json(v1) == dataset_to_json(v2)
    combined = sorted(dataset_to_json(Dataset.from_flows([f])) for f in t1.flows + v1.flows)
    original = sorted(dataset_to_json(Dataset.from_flows([f])) for f in ds.flows)
    assert combined == original
    assert len(t1) + len(v1) == len(ds)


# ---------------------------------------------------------------------------
# file round-trips

def test_save_load_round_trip(tmp_path):
    ds = dataset_of({"a": 3, "b": 2})
    path = tmp_path / "flows.json"
    save_flows(ds, path)
    assert load_flows(path) == ds


def test_serialization_byte_stable():
    ds = dataset_of({"a": 3})
    assert dataset_to_json(ds) == dataset_to_json(ds)


def test_unlabeled_round_trip():
    ds = Dataset(flows=(make_flow([1, 0]),), class_index={})
    text = dataset_to_json(ds)
    assert '"label"' not in text
    assert dataset_from_json(text) == ds


def test_padding_not_serialized():
    ds = Dataset.from_flows([make_flow([1, 0, 1, 0, 1], label="a")])
    obj = json.loads(dataset_to_json(ds))
    assert obj["flows"][0]["n_real_packets"] == 5
    assert len(obj["flows"][0]["packets"]) == 5


def test_float_round_trip_bit_exact():
    iats = [0.0, 0.1 + 1e-17, math.pi / 30]
    ds = Dataset.from_flows([make_flow([1, 0, 1], label="a", iats=iats)])
    back = dataset_from_json(dataset_to_json(ds))
    for got, want in zip(back.flows[0].packets, ds.flows[0].packets):
        assert got.inter_arrival_time == want.inter_arrival_time


def test_version_mismatch_rejected():
    ds = dataset_of({"a": 2})
    obj = json.loads(dataset_to_json(ds))
    obj["version"] = 99
    with pytest.raises(DatasetFormatError, match="version"):
        dataset_from_json(json.dumps(obj))


@pytest.mark.parametrize("mutate", [
    lambda o: o.pop("classes"),
    lambda o: o["flows"][0].pop("packets"),
    lambda o: o["flows"][0].update(extra=1),
    lambda o: o["flows"][0].update(n_real_packets=7),
    lambda o: o["flows"][0]["packets"][0].__setitem__(0, 3),
    lambda o: o.update(junk=[]),
])
def test_schema_violations_rejected(mutate):
    obj = json.loads(dataset_to_json(dataset_of({"a": 2})))
    mutate(obj)
    with pytest.raises(DatasetFormatError):
        dataset_from_json(json.dumps(obj))


def test_synthetic_flag_round_trips():
    flow = make_flow([1, 0], label="a")
    synthetic = FlowRecord(key=flow.key, label="a", packets=flow.packets,
                           n_real_packets=2, synthetic=True)
    ds = Dataset.from_flows([synthetic])
    back = dataset_from_json(dataset_to_json(ds))
    assert back.flows[0].synthetic is True
