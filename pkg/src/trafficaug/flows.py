"""Labeled network flows: data model, CSV ingestion, statistics, splitting, I/O.

A flow is the bidirectional packet exchange between two endpoints sharing a
5-tuple (addresses, ports, transport).  Each flow keeps at most its first 20
packets, and each packet carries six features:

    direction (1 = initiator to responder, 0 = reverse), TCP window size,
    source port, destination port, inter-arrival time, payload length.

The classifier consumes flows as 6x20 matrices (feature rows x packet
columns, zero-padded on the right); :meth:`FlowRecord.matrix` produces that
view in the row order above.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DatasetFormatError, IngestError

MAX_PACKETS = 20
N_FEATURES = 6

#: Row order of the matrix view (and of serialized packet vectors).
FEATURE_NAMES = (
    "direction",
    "tcp_window",
    "src_port",
    "dst_port",
    "inter_arrival_time",
    "payload_length",
)

PACKET_CSV_HEADER = (
    "ts",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "proto",
    "tcp_window",
    "payload_len",
    "label",
)

DATASET_FILE_VERSION = 1


class Transport(enum.Enum):
    TCP = "tcp"
    UDP = "udp"

    @classmethod
    def from_str(cls, text: str) -> "Transport":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"transport must be tcp or udp, got {text!r}") from None


def _check_port(value: int, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 65535:
        raise ValueError(f"{name} must be an integer in [0, 65535], got {value!r}")


@dataclass(frozen=True)
class FiveTuple:
    """Oriented 5-tuple; ``src`` is the flow initiator."""

    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    transport: Transport

    def __post_init__(self):
        if not self.src_addr or not self.dst_addr:
            raise ValueError("addresses must be non-empty strings")
        _check_port(self.src_port, "src_port")
        _check_port(self.dst_port, "dst_port")
        if not isinstance(self.transport, Transport):
            raise ValueError(f"transport must be a Transport, got {self.transport!r}")

    def sort_key(self):
        return (self.src_addr, self.src_port, self.dst_addr, self.dst_port,
                self.transport.value)


@dataclass(frozen=True)
class PacketFeatureVector:
    """The six per-packet features, in matrix-row order."""

    direction: int
    tcp_window: int
    src_port: int
    dst_port: int
    inter_arrival_time: float
    payload_length: int

    def __post_init__(self):
        if self.direction not in (0, 1):
            raise ValueError(f"direction must be 0 or 1, got {self.direction!r}")
        if not isinstance(self.tcp_window, int) or self.tcp_window < 0:
            raise ValueError(f"tcp_window must be a non-negative integer, got {self.tcp_window!r}")
        _check_port(self.src_port, "src_port")
        _check_port(self.dst_port, "dst_port")
        iat = self.inter_arrival_time
        if not isinstance(iat, (int, float)) or not math.isfinite(iat) or iat < 0:
            raise ValueError(f"inter_arrival_time must be a finite non-negative number, got {iat!r}")
        if not isinstance(self.payload_length, int) or self.payload_length < 0:
            raise ValueError(f"payload_length must be a non-negative integer, got {self.payload_length!r}")

    def as_list(self) -> list:
        return [self.direction, self.tcp_window, self.src_port, self.dst_port,
                self.inter_arrival_time, self.payload_length]


@dataclass(frozen=True)
class FlowRecord:
    """One flow: key, optional label, 1-20 real packets, provenance flag.

    ``synthetic`` marks flows produced by the augmenter; real and
    oversampled flows carry False.
    """

    key: FiveTuple
    label: str | None
    packets: tuple[PacketFeatureVector, ...]
    n_real_packets: int
    synthetic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        problems = flow_violations(self)
        if problems:
            raise ValueError("invalid FlowRecord: " + "; ".join(problems))

    def matrix(self) -> np.ndarray:
        """6x20 float matrix, zero-padded beyond ``n_real_packets`` columns."""
        out = np.zeros((N_FEATURES, MAX_PACKETS), dtype=float)
        for col, pkt in enumerate(self.packets):
            out[:, col] = pkt.as_list()
        return out


def flow_violations(flow: FlowRecord) -> list[str]:
    """Check every FlowRecord invariant; return human-readable violations.

    Used both by the constructor (which raises) and by external validators
    such as the synthesis demo, so a flow can be re-checked after I/O.
    """
    problems: list[str] = []
    n = len(flow.packets)
    if not 1 <= n <= MAX_PACKETS:
        problems.append(f"packet count {n} outside [1, {MAX_PACKETS}]")
        return problems
    if flow.n_real_packets != n:
        problems.append(f"n_real_packets {flow.n_real_packets} != stored packets {n}")
    if flow.packets[0].direction != 1:
        problems.append("first packet direction is not 1 (initiator)")
    if flow.packets[0].inter_arrival_time != 0:
        problems.append("first packet inter_arrival_time is not 0")
    if flow.key.transport is Transport.UDP:
        if any(p.tcp_window != 0 for p in flow.packets):
            problems.append("UDP flow has non-zero tcp_window")
    return problems


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of flows plus the class-name -> id mapping.

    Class ids are contiguous from 0 and every labeled flow's label must be
    present in ``class_index``.  Unlabeled flows are allowed (and then the
    index may be empty).
    """

    flows: tuple[FlowRecord, ...]
    class_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))
        ids = sorted(self.class_index.values())
        if ids != list(range(len(ids))):
            raise ValueError("class ids must be contiguous from 0")
        for flow in self.flows:
            if flow.label is not None and flow.label not in self.class_index:
                raise ValueError(f"flow label {flow.label!r} missing from class_index")

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.class_index, key=self.class_index.__getitem__))

    def flows_of_class(self, name: str) -> tuple[FlowRecord, ...]:
        if name not in self.class_index:
            raise KeyError(f"unknown class {name!r}")
        return tuple(f for f in self.flows if f.label == name)

    @classmethod
    def from_flows(cls, flows) -> "Dataset":
        """Build a dataset with a sorted-name class index."""
        flows = tuple(flows)
        names = sorted({f.label for f in flows if f.label is not None})
        return cls(flows=flows, class_index={n: i for i, n in enumerate(names)})


@dataclass(frozen=True)
class ClassStats:
    counts: dict[str, int]
    percentages: dict[str, float]
    total: int

    def format_table(self) -> str:
        width = max([len("class")] + [len(n) for n in self.counts])
        lines = [f"{'class':<{width}}  {'flows':>9}  {'share':>8}"]
        for name in sorted(self.counts, key=self.counts.__getitem__, reverse=True):
            lines.append(f"{name:<{width}}  {self.counts[name]:>9d}  {self.percentages[name]:>7.3f}%")
        lines.append(f"{'total':<{width}}  {self.total:>9d}  {100.0:>7.3f}%")
        return "\n".join(lines)


def stats_from_counts(counts: dict[str, int]) -> ClassStats:
    """ClassStats from a raw per-class tally (exact share arithmetic)."""
    total = sum(counts.values())
    if total == 0:
        raise ValueError("class_stats requires a non-empty labeled dataset")
    percentages = {name: 100.0 * c / total for name, c in counts.items()}
    return ClassStats(counts=dict(counts), percentages=percentages, total=total)


def class_stats(dataset: Dataset) -> ClassStats:
    """Exact per-class flow counts and percentages of the labeled total."""
    counts: dict[str, int] = {name: 0 for name in dataset.class_names}
    for flow in dataset.flows:
        if flow.label is not None:
            counts[flow.label] += 1
    return stats_from_counts(counts)


# ---------------------------------------------------------------------------
# CSV ingestion

@dataclass
class _PacketRow:
    ts: float
    src: tuple[str, int]
    dst: tuple[str, int]
    tcp_window: int
    payload_length: int
    label: str


class _FlowBuilder:
    """Accumulates one in-progress flow; keeps only the first 20 packets."""

    __slots__ = ("transport", "rows", "total_seen", "last_ts", "first_ts")

    def __init__(self, transport: Transport, row: _PacketRow):
        self.transport = transport
        self.rows = [row]
        self.total_seen = 1
        self.first_ts = row.ts
        self.last_ts = row.ts

    def add(self, row: _PacketRow) -> None:
        self.total_seen += 1
        if len(self.rows) < MAX_PACKETS:
            self.rows.append(row)
        self.last_ts = max(self.last_ts, row.ts)

    def finalize(self) -> tuple[FlowRecord, float]:
        rows = sorted(self.rows, key=lambda r: r.ts)
        initiator = rows[0].src
        responder = rows[0].dst
        packets = []
        prev_ts = rows[0].ts
        for i, row in enumerate(rows):
            packets.append(PacketFeatureVector(
                direction=1 if row.src == initiator else 0,
                tcp_window=row.tcp_window,
                src_port=row.src[1],
                dst_port=row.dst[1],
                inter_arrival_time=0.0 if i == 0 else row.ts - prev_ts,
                payload_length=row.payload_length,
            ))
            prev_ts = row.ts
        key = FiveTuple(
            src_addr=initiator[0], dst_addr=responder[0],
            src_port=initiator[1], dst_port=responder[1],
            transport=self.transport,
        )
        record = FlowRecord(key=key, label=rows[0].label, packets=tuple(packets),
                            n_real_packets=len(packets))
        return record, rows[0].ts


def _parse_row(line_no: int, row: list[str]) -> tuple[tuple, Transport, _PacketRow]:
    if len(row) != len(PACKET_CSV_HEADER):
        raise IngestError(line_no, f"expected {len(PACKET_CSV_HEADER)} fields, got {len(row)}")
    try:
        ts = float(row[0])
        src_ip, dst_ip = row[1], row[2]
        src_port, dst_port = int(row[3]), int(row[4])
        transport = Transport.from_str(row[5])
        tcp_window = int(row[6])
        payload = int(row[7])
        label = row[8]
        if not math.isfinite(ts):
            raise ValueError("timestamp must be finite")
        if not src_ip or not dst_ip:
            raise ValueError("addresses must be non-empty")
        for port in (src_port, dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port {port} outside [0, 65535]")
        if tcp_window < 0 or payload < 0:
            raise ValueError("tcp_window and payload_len must be non-negative")
        if transport is Transport.UDP and tcp_window != 0:
            raise ValueError("udp row with non-zero tcp_window")
        if not label:
            raise ValueError("empty label")
    except IngestError:
        raise
    except ValueError as exc:
        raise IngestError(line_no, str(exc)) from None
    src = (src_ip, src_port)
    dst = (dst_ip, dst_port)
    bikey = (min(src, dst), max(src, dst), transport.value)
    return bikey, transport, _PacketRow(ts=ts, src=src, dst=dst, tcp_window=tcp_window,
                                        payload_length=payload, label=label)


def ingest_packets(source, idle_timeout: float = 60.0) -> Dataset:
    """Fold a labeled packet CSV into a Dataset of flows.

    ``source`` is a path, a text file object, or an iterable of lines whose
    first line is the fixed header ``ts,src_ip,...,label``.  Packets sharing
    a bidirectional 5-tuple belong to one flow until the idle gap between
    consecutive rows exceeds ``idle_timeout`` seconds, which closes the flow
    and starts a new one.  Flows keep their first 20 packets; orientation is
    fixed by the earliest packet, so the first stored packet always has
    direction 1 and inter-arrival time 0.

    Rows are expected in non-decreasing time order per flow; stored packets
    are re-sorted by timestamp as a safety net before feature extraction.
    """
    if idle_timeout <= 0:
        raise ValueError("idle_timeout must be positive")
    close_us = None
    if isinstance(source, (str, os.PathLike)):
        handle = open(source, "r", encoding="utf-8", newline="")
        close_us = handle
    else:
        handle = source  # file object or any iterable of lines
    try:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(1, "missing header") from None
        if tuple(h.strip() for h in header) != PACKET_CSV_HEADER:
            raise IngestError(1, f"bad header {header!r}, expected {','.join(PACKET_CSV_HEADER)}")

        builders: dict[tuple, _FlowBuilder] = {}
        finished: list[tuple[FlowRecord, float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            bikey, transport, pkt = _parse_row(line_no, row)
            builder = builders.get(bikey)
            if builder is not None and pkt.ts - builder.last_ts > idle_timeout:
                finished.append(builder.finalize())
                builder = None
            if builder is None:
                builders[bikey] = _FlowBuilder(transport, pkt)
            else:
                builder.add(pkt)
        finished.extend(b.finalize() for b in builders.values())
    finally:
        if close_us is not None:
            close_us.close()

    # Canonical order: by oriented key then by flow start time, so the
    # result is independent of how distinct flows were interleaved.
    finished.sort(key=lambda item: (item[0].key.sort_key(), item[1]))
    return Dataset.from_flows(record for record, _ in finished)


# ---------------------------------------------------------------------------
# Train/test split

def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split: per class, floor(fraction * n) flows go to train.

    Deterministic under a fixed seed; train and test preserve the input
    flow order and partition the dataset exactly.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}"
                         " (1.0 would leave an empty test split)")
    by_class: dict[str, list[int]] = {name: [] for name in dataset.class_names}
    for idx, flow in enumerate(dataset.flows):
        if flow.label is None:
            raise ValueError("split requires every flow to be labeled")
        by_class[flow.label].append(idx)
    rng = np.random.default_rng(seed)
    train_idx: set[int] = set()
    for name in dataset.class_names:
        indices = by_class[name]
        if len(indices) < 2:
            raise ValueError(f"class {name!r} has {len(indices)} flow(s); need at least 2 to split")
        n_train = math.floor(train_fraction * len(indices))
        order = rng.permutation(len(indices))
        train_idx.update(indices[i] for i in order[:n_train])
    train_flows = tuple(f for i, f in enumerate(dataset.flows) if i in train_idx)
    test_flows = tuple(f for i, f in enumerate(dataset.flows) if i not in train_idx)
    return (Dataset(flows=train_flows, class_index=dict(dataset.class_index)),
            Dataset(flows=test_flows, class_index=dict(dataset.class_index)))


# ---------------------------------------------------------------------------
# Dataset file I/O (versioned JSON)

def _flow_to_obj(flow: FlowRecord) -> dict:
    obj: dict = {
        "key": {
            "src_addr": flow.key.src_addr,
            "dst_addr": flow.key.dst_addr,
            "src_port": flow.key.src_port,
            "dst_port": flow.key.dst_port,
            "transport": flow.key.transport.value,
        },
    }
    if flow.label is not None:
        obj["label"] = flow.label
    obj["n_real_packets"] = flow.n_real_packets
    obj["packets"] = [p.as_list() for p in flow.packets]
    if flow.synthetic:
        obj["synthetic"] = True
    return obj


def dataset_to_json(dataset: Dataset) -> str:
    """Serialize with a fixed field order; output is byte-stable."""
    doc = {
        "version": DATASET_FILE_VERSION,
        "classes": list(dataset.class_names),
        "flows": [_flow_to_obj(f) for f in dataset.flows],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def save_flows(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_to_json(dataset))
        fh.write("\n")


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise DatasetFormatError(f"{context}: missing key {key!r}")
    return obj[key]


def _flow_from_obj(idx: int, obj: dict, classes: list[str]) -> FlowRecord:
    context = f"flows[{idx}]"
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"{context}: not an object")
    allowed = {"key", "label", "n_real_packets", "packets", "synthetic"}
    unknown = set(obj) - allowed
    if unknown:
        raise DatasetFormatError(f"{context}: unknown keys {sorted(unknown)}")
    key_obj = _require(obj, "key", context)
    packets_obj = _require(obj, "packets", context)
    n_real = _require(obj, "n_real_packets", context)
    label = obj.get("label")
    if label is not None and label not in classes:
        raise DatasetFormatError(f"{context}: label {label!r} not in classes")
    try:
        key = FiveTuple(
            src_addr=key_obj["src_addr"], dst_addr=key_obj["dst_addr"],
            src_port=key_obj["src_port"], dst_port=key_obj["dst_port"],
            transport=Transport.from_str(key_obj["transport"]),
        )
        if not isinstance(packets_obj, list) or n_real != len(packets_obj):
            raise ValueError(f"n_real_packets {n_real} != serialized packets {len(packets_obj)}"
                             " (padding must not be serialized)")
        packets = []
        for vec in packets_obj:
            if not isinstance(vec, list) or len(vec) != N_FEATURES:
                raise ValueError(f"packet vector must have {N_FEATURES} entries")
            packets.append(PacketFeatureVector(
                direction=vec[0], tcp_window=vec[1], src_port=vec[2],
                dst_port=vec[3], inter_arrival_time=float(vec[4]),
                payload_length=vec[5],
            ))
        return FlowRecord(key=key, label=label, packets=tuple(packets),
                          n_real_packets=n_real, synthetic=bool(obj.get("synthetic", False)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{context}: {exc}") from None


def dataset_from_json(text: str) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DatasetFormatError("top level must be an object")
    unknown = set(doc) - {"version", "classes", "flows"}
    if unknown:
        raise DatasetFormatError(f"unknown top-level keys {sorted(unknown)}")
    version = _require(doc, "version", "dataset")
    if version != DATASET_FILE_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version!r},"
                                 f" expected {DATASET_FILE_VERSION}")
    classes = _require(doc, "classes", "dataset")
    flows_obj = _require(doc, "flows", "dataset")
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise DatasetFormatError("classes must be a list of strings")
    if len(set(classes)) != len(classes):
        raise DatasetFormatError("classes contains duplicates")
    flows = tuple(_flow_from_obj(i, o, classes) for i, o in enumerate(flows_obj))
    return Dataset(flows=flows, class_index={n: i for i, n in enumerate(classes)})


def load_flows(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_json(fh.read())
