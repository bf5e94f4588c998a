"""Synthetic minority-class flow generation and the oversampling baseline.

A :class:`ClassSynthesizer` bundles everything learned from one class of the
training split: a direction-sequence generator, a TCP-window generator
(absent for UDP-only classes) and one kernel density estimate per numerical
feature.  Synthesis composes them: generate a direction pattern, align a
window pattern to its length, then draw each packet's numerical features
independently from the KDEs and clamp them to their legal ranges.  Padding
columns beyond the generated length stay zero, and the first packet is
always initiator-to-responder with inter-arrival time zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .density import GaussianKde
from .exceptions import NoTcpPacketsError
from .flows import (
    Dataset,
    FiveTuple,
    FlowRecord,
    PacketFeatureVector,
    Transport,
)
from .seqgen import LstmSequenceGenerator, build_direction_corpus, build_window_corpus
from .validation import check_rng, subseed

#: Reserved benchmarking addresses used for synthetic flow keys.
SYNTHETIC_SRC_ADDR = "198.18.0.1"
SYNTHETIC_DST_ADDR = "198.18.0.2"

NUMERIC_FEATURES = ("src_port", "dst_port", "inter_arrival_time", "payload_length")

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class SynthesizerConfig:
    min_flows: int = 50
    vocab_cap: int = 64
    hidden_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 32
    temperature: float = 1.0

    def generator_params(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "temperature": self.temperature,
        }


@dataclass
class ClassSynthesizer:
    class_name: str
    direction_generator: LstmSequenceGenerator
    window_generator: LstmSequenceGenerator | None
    kdes: dict[str, GaussianKde]

    def __post_init__(self):
        if set(self.kdes) != set(NUMERIC_FEATURES):
            raise ValueError(f"synthesizer needs exactly the KDEs {NUMERIC_FEATURES}")


def _numeric_samples(class_flows) -> dict[str, list[float]]:
    columns: dict[str, list[float]] = {name: [] for name in NUMERIC_FEATURES}
    for flow in class_flows:
        for i, pkt in enumerate(flow.packets):
            columns["src_port"].append(float(pkt.src_port))
            columns["dst_port"].append(float(pkt.dst_port))
            columns["payload_length"].append(float(pkt.payload_length))
            if i > 0:
                # the first packet's inter-arrival time is structurally 0
                columns["inter_arrival_time"].append(pkt.inter_arrival_time)
    return columns


def build_synthesizer(train: Dataset, class_name: str, config: SynthesizerConfig,
                      random_state: int = 0) -> ClassSynthesizer:
    """Train one class' generators and KDEs on the training split only."""
    class_flows = train.flows_of_class(class_name)
    if len(class_flows) < config.min_flows:
        raise ValueError(
            f"class {class_name!r} has {len(class_flows)} training flows,"
            f" fewer than min_flows={config.min_flows}")

    direction_corpus = build_direction_corpus(train, class_name)
    direction_generator = LstmSequenceGenerator(
        random_state=subseed(random_state, f"{class_name}:direction"),
        **config.generator_params(),
    ).fit(direction_corpus)

    window_generator = None
    try:
        window_corpus = build_window_corpus(train, class_name, vocab_cap=config.vocab_cap)
    except NoTcpPacketsError as exc:
        warnings.warn(f"{exc}; synthetic flows of this class carry tcp_window=0")
    else:
        window_generator = LstmSequenceGenerator(
            random_state=subseed(random_state, f"{class_name}:window"),
            **config.generator_params(),
        ).fit(window_corpus)

    kdes = {}
    for feature, samples in _numeric_samples(class_flows).items():
        if len(samples) >= 2:
            kdes[feature] = GaussianKde(bandwidth="silverman").fit(samples)
        elif samples:
            kdes[feature] = GaussianKde(bandwidth=1e-9).fit(samples)
        else:
            # every flow has a single packet, so no inter-arrival samples exist
            kdes[feature] = GaussianKde(bandwidth=1e-9).fit([0.0])
    return ClassSynthesizer(class_name=class_name,
                            direction_generator=direction_generator,
                            window_generator=window_generator,
                            kdes=kdes)


def _round_clamp(values: np.ndarray, low: int, high: int | None) -> list[int]:
    ints = np.rint(values).astype(int)
    ints = np.maximum(ints, low)
    if high is not None:
        ints = np.minimum(ints, high)
    return [int(v) for v in ints]


def synthesize_flow(synth: ClassSynthesizer, rng) -> FlowRecord:
    """One synthetic flow; the direction pattern's length is authoritative."""
    rng = check_rng(rng)
    directions = synth.direction_generator.generate(random_state=rng)
    directions[0] = 1
    n = len(directions)

    if synth.window_generator is not None:
        windows = synth.window_generator.generate(random_state=rng)
        windows = windows[:n] + [windows[-1]] * max(0, n - len(windows))
        transport = Transport.TCP
    else:
        windows = [0] * n
        transport = Transport.UDP

    src_ports = _round_clamp(synth.kdes["src_port"].sample(n, rng), 0, 65535)
    dst_ports = _round_clamp(synth.kdes["dst_port"].sample(n, rng), 0, 65535)
    iats = np.maximum(synth.kdes["inter_arrival_time"].sample(n, rng), 0.0)
    iats[0] = 0.0
    payloads = _round_clamp(synth.kdes["payload_length"].sample(n, rng), 0, None)

    packets = tuple(
        PacketFeatureVector(
            direction=directions[i],
            tcp_window=windows[i],
            src_port=src_ports[i],
            dst_port=dst_ports[i],
            inter_arrival_time=float(iats[i]),
            payload_length=payloads[i],
        )
        for i in range(n)
    )
    key = FiveTuple(src_addr=SYNTHETIC_SRC_ADDR, dst_addr=SYNTHETIC_DST_ADDR,
                    src_port=src_ports[0], dst_port=dst_ports[0], transport=transport)
    return FlowRecord(key=key, label=synth.class_name, packets=packets,
                      n_real_packets=n, synthetic=True)


@dataclass(frozen=True)
class BalancePlan:
    """Target per-class flow counts after augmentation or oversampling."""

    targets: dict[str, int]

    def validated_needs(self, dataset: Dataset) -> dict[str, int]:
        """Per-class number of flows to add, in class-id order."""
        counts = {name: 0 for name in dataset.class_names}
        for flow in dataset.flows:
            if flow.label in counts:
                counts[flow.label] += 1
        needs = {}
        for name in sorted(self.targets, key=dataset.class_index.__getitem__):
            if name not in dataset.class_index:
                raise ValueError(f"plan class {name!r} not in dataset")
            if self.targets[name] < counts[name]:
                raise ValueError(
                    f"plan target {self.targets[name]} below current count"
                    f" {counts[name]} for class {name!r}")
            needs[name] = self.targets[name] - counts[name]
        return needs


def plan_from_counts(counts: dict[str, int], classes, strategy: str = "median") -> BalancePlan:
    """Targets for the listed classes: the median class count, or ``fixed:N``.

    Either way a class already above the target keeps its current count
    (targets never shrink a class).
    """
    classes = list(classes)
    if not classes:
        raise ValueError("balance plan needs at least one class")
    unknown = [c for c in classes if c not in counts]
    if unknown:
        raise ValueError(f"classes not in dataset: {unknown}")
    if strategy == "median":
        level = int(round(float(np.median(sorted(counts.values())))))
    elif strategy.startswith("fixed:"):
        level = int(strategy.split(":", 1)[1])
        if level < 0:
            raise ValueError("fixed target must be non-negative")
    else:
        raise ValueError(f"unknown balance strategy {strategy!r}")
    return BalancePlan(targets={name: max(counts[name], level) for name in classes})


def default_balance_plan(train: Dataset, classes, strategy: str = "median") -> BalancePlan:
    """Plan over the training split's class tally (see ``plan_from_counts``)."""
    counts = {name: 0 for name in train.class_names}
    for flow in train.flows:
        if flow.label in counts:
            counts[flow.label] += 1
    return plan_from_counts(counts, classes, strategy)


def augment_dataset(train: Dataset, plan: BalancePlan,
                    synthesizers: dict[str, ClassSynthesizer], rng) -> Dataset:
    """Append synthetic flows until every planned class reaches its target."""
    rng = check_rng(rng)
    needs = plan.validated_needs(train)
    missing = [name for name in needs if name not in synthesizers]
    if missing:
        raise ValueError(f"no synthesizer for planned classes {missing}")
    new_flows = []
    for name, need in needs.items():
        for _ in range(need):
            new_flows.append(synthesize_flow(synthesizers[name], rng))
    return Dataset(flows=train.flows + tuple(new_flows),
                   class_index=dict(train.class_index))


def oversample_dataset(train: Dataset, plan: BalancePlan, rng) -> Dataset:
    """Append uniform-with-replacement duplicates of existing flows."""
    rng = check_rng(rng)
    needs = plan.validated_needs(train)
    new_flows = []
    for name, need in needs.items():
        pool = train.flows_of_class(name)
        if need and not pool:
            raise ValueError(f"class {name!r} has no flows to oversample")
        picks = rng.integers(0, len(pool), size=need)
        new_flows.extend(pool[i] for i in picks)
    return Dataset(flows=train.flows + tuple(new_flows),
                   class_index=dict(train.class_index))


# ---------------------------------------------------------------------------
# Augmentation bundle: everything needed to regenerate identical synthetic
# datasets from (bundle, seed).

def synthesizers_to_bundle_obj(synthesizers: dict[str, ClassSynthesizer],
                               config: SynthesizerConfig) -> dict:
    classes = {}
    for name in sorted(synthesizers):
        synth = synthesizers[name]
        classes[name] = {
            "direction_generator": synth.direction_generator.to_obj(),
            "window_generator": (None if synth.window_generator is None
                                 else synth.window_generator.to_obj()),
            "kde": {feature: synth.kdes[feature].to_obj() for feature in NUMERIC_FEATURES},
        }
    return {"version": BUNDLE_VERSION, "config": asdict(config), "classes": classes}


def synthesizers_from_bundle_obj(obj: dict) -> tuple[dict[str, ClassSynthesizer], SynthesizerConfig]:
    if obj.get("version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {obj.get('version')!r}")
    config = SynthesizerConfig(**obj["config"])
    synthesizers = {}
    for name, entry in obj["classes"].items():
        synthesizers[name] = ClassSynthesizer(
            class_name=name,
            direction_generator=LstmSequenceGenerator.from_obj(entry["direction_generator"]),
            window_generator=(None if entry["window_generator"] is None
                              else LstmSequenceGenerator.from_obj(entry["window_generator"])),
            kdes={feature: GaussianKde.from_obj(entry["kde"][feature])
                  for feature in NUMERIC_FEATURES},
        )
    return synthesizers, config
