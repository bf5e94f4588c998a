"""Declarative experiment runs: config schema and the orchestration pipeline.

One run loads a flow dataset, makes a single stratified train/test split,
builds each requested training variant (actual, sampled, augmented), trains
one classifier per variant with the same seed, evaluates everything on the
shared test split, and writes reports, plot data, model checkpoints and the
augmentation bundle.  All randomness derives from one root seed through
named sub-seeds, so identical config and seed reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import augment as aug
from .classifier import CrnnClassifier
from .evaluation import VARIANTS, compare_runs, evaluate, plot_rows_to_csv
from .exceptions import ConfigError, StageError
from .flows import (
    Dataset,
    _flow_to_obj,
    class_stats,
    dataset_to_json,
    ingest_packets,
    load_flows,
    save_flows,
    split,
)
from .validation import subseed

_GENERATOR_KEYS = {"hidden_size", "epochs", "learning_rate", "batch_size", "temperature"}
_CRNN_KEYS = {
    "conv1_filters", "conv2_filters", "kernel_h", "kernel_w", "lstm_hidden",
    "fc1_units", "fc2_units", "dropout1", "dropout2", "batch_size", "epochs",
    "learning_rate",
}
_AUGMENT_KEYS = {"classes", "strategy", "min_flows", "vocab_cap"}
_TOP_KEYS = {
    "packet_csv", "dataset", "out_dir", "seed", "idle_timeout", "split_fraction",
    "variants", "augmentation", "generator", "crnn",
}


@dataclass
class RunConfig:
    dataset: str
    out_dir: str = "out"
    packet_csv: str | None = None
    seed: int = 0
    idle_timeout: float = 60.0
    split_fraction: float = 0.85
    variants: tuple[str, ...] = ("actual", "sampled", "augmented")
    augment_classes: tuple[str, ...] = ()
    augment_strategy: str = "median"
    min_flows: int = 50
    vocab_cap: int = 64
    generator: dict = field(default_factory=dict)
    crnn: dict = field(default_factory=dict)

    def synthesizer_config(self) -> aug.SynthesizerConfig:
        return aug.SynthesizerConfig(min_flows=self.min_flows, vocab_cap=self.vocab_cap,
                                     **self.generator)

    @classmethod
    def from_obj(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "dataset" not in obj:
            raise ConfigError("config needs a 'dataset' path")
        augmentation = obj.get("augmentation", {})
        if not isinstance(augmentation, dict):
            raise ConfigError("'augmentation' must be an object")
        unknown = set(augmentation) - _AUGMENT_KEYS
        if unknown:
            raise ConfigError(f"unknown augmentation keys {sorted(unknown)}")
        generator = obj.get("generator", {})
        if not isinstance(generator, dict) or set(generator) - _GENERATOR_KEYS:
            raise ConfigError(f"generator settings must be an object with keys"
                              f" among {sorted(_GENERATOR_KEYS)}")
        crnn = obj.get("crnn", {})
        if not isinstance(crnn, dict) or set(crnn) - _CRNN_KEYS:
            raise ConfigError(f"crnn settings must be an object with keys"
                              f" among {sorted(_CRNN_KEYS)}")
        variants = tuple(obj.get("variants", ("actual", "sampled", "augmented")))
        bad = [v for v in variants if v not in VARIANTS]
        if bad or not variants:
            raise ConfigError(f"variants must be a non-empty subset of {VARIANTS}, got {variants}")
        if len(set(variants)) != len(variants):
            raise ConfigError("variants contains duplicates")
        fraction = float(obj.get("split_fraction", 0.85))
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {fraction}")
        seed = obj.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        needs_plan = {"sampled", "augmented"} & set(variants)
        classes = tuple(augmentation.get("classes", ()))
        if needs_plan and not classes:
            raise ConfigError("augmentation.classes must be given for sampled/augmented variants")
        return cls(
            dataset=str(obj["dataset"]),
            out_dir=str(obj.get("out_dir", "out")),
            packet_csv=None if obj.get("packet_csv") is None else str(obj["packet_csv"]),
            seed=seed,
            idle_timeout=float(obj.get("idle_timeout", 60.0)),
            split_fraction=fraction,
            variants=variants,
            augment_classes=classes,
            augment_strategy=str(augmentation.get("strategy", "median")),
            min_flows=int(augmentation.get("min_flows", 50)),
            vocab_cap=int(augmentation.get("vocab_cap", 64)),
            generator=dict(generator),
            crnn=dict(crnn),
        )


def load_config(path, seed=None, out_dir=None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    config = RunConfig.from_obj(obj)
    if seed is not None:
        config.seed = seed
    if out_dir is not None:
        config.out_dir = out_dir
    return config


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n")


class _Stage:
    """Annotates exceptions with the pipeline stage that raised them."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def run_ingest(config: RunConfig) -> str:
    """CSV -> flow dataset file; returns the class-statistics table text."""
    if config.packet_csv is None:
        raise ConfigError("config needs 'packet_csv' for ingestion")
    with _Stage("ingest"):
        dataset = ingest_packets(config.packet_csv, idle_timeout=config.idle_timeout)
        save_flows(dataset, config.dataset)
        return class_stats(dataset).format_table()


def _dataset_hash(dataset: Dataset) -> str:
    return hashlib.sha256(dataset_to_json(dataset).encode("utf-8")).hexdigest()


def run_experiment(config: RunConfig) -> dict:
    """Execute the full comparison; returns artifact paths and the summary."""
    os.makedirs(config.out_dir, exist_ok=True)
    marker = os.path.join(config.out_dir, "INCOMPLETE")
    _write_text(marker, "run in progress or aborted; outputs may be partial\n")
    artifacts: dict[str, str] = {}

    with _Stage("load"):
        dataset = load_flows(config.dataset)
        missing = [c for c in config.augment_classes if c not in dataset.class_index]
        if missing:
            raise ConfigError(f"augmentation classes not in dataset: {missing}")

    with _Stage("split"):
        train, test = split(dataset, config.split_fraction, subseed(config.seed, "split"))
        test_hash = _dataset_hash(test)

    plan = None
    if {"sampled", "augmented"} & set(config.variants):
        with _Stage("plan"):
            plan = aug.default_balance_plan(train, config.augment_classes,
                                            config.augment_strategy)

    reports = []
    for variant in config.variants:
        if variant == "actual":
            train_v = train
        elif variant == "sampled":
            with _Stage("oversample"):
                train_v = aug.oversample_dataset(train, plan,
                                                 subseed(config.seed, "oversample"))
        else:
            with _Stage("synthesize"):
                synth_config = config.synthesizer_config()
                synthesizers = {
                    name: aug.build_synthesizer(train, name, synth_config,
                                                random_state=subseed(config.seed, "generators"))
                    for name in sorted(plan.targets, key=train.class_index.__getitem__)
                }
                bundle = aug.synthesizers_to_bundle_obj(synthesizers, synth_config)
                bundle_path = os.path.join(config.out_dir, "augmentation_bundle.json")
                _write_json(bundle_path, bundle)
                artifacts["bundle"] = bundle_path
                train_v = aug.augment_dataset(train, plan, synthesizers,
                                              subseed(config.seed, "synthesis"))

        with _Stage(f"train:{variant}"):
            model = CrnnClassifier(random_state=subseed(config.seed, "crnn"),
                                   **config.crnn).fit(train_v)
        with _Stage(f"evaluate:{variant}"):
            report = evaluate(model, test, variant)
            reports.append(report)
            report_obj = report.to_obj()
            report_obj["test_set_hash"] = test_hash
            report_path = os.path.join(config.out_dir, f"report_{variant}.json")
            _write_json(report_path, report_obj)
            artifacts[f"report_{variant}"] = report_path
            model_path = os.path.join(config.out_dir, f"model_{variant}.json")
            _write_json(model_path, model.to_obj())
            artifacts[f"model_{variant}"] = model_path

    with _Stage("compare"):
        comparison = compare_runs(reports)
        comparison_path = os.path.join(config.out_dir, "comparison.json")
        _write_json(comparison_path, {
            "per_class": comparison["per_class"],
            "overall": comparison["overall"],
            "deltas": comparison["deltas"],
            "test_set_hash": test_hash,
        })
        artifacts["comparison"] = comparison_path
        plot_path = os.path.join(config.out_dir, "plot.csv")
        _write_text(plot_path, plot_rows_to_csv(comparison["plot_rows"]))
        artifacts["plot"] = plot_path
        summary_path = os.path.join(config.out_dir, "summary.txt")
        _write_text(summary_path, comparison["summary"] + "\n")
        artifacts["summary"] = summary_path

    os.remove(marker)
    return {"artifacts": artifacts, "summary": comparison["summary"],
            "test_set_hash": test_hash}


def run_synth_demo(config: RunConfig, class_name: str, count: int) -> list[dict]:
    """Train one synthesizer on the train split and emit flows for eyeballing."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    with _Stage("load"):
        dataset = load_flows(config.dataset)
    with _Stage("split"):
        train, _ = split(dataset, config.split_fraction, subseed(config.seed, "split"))
    with _Stage("synthesize"):
        synth = aug.build_synthesizer(train, class_name, config.synthesizer_config(),
                                      random_state=subseed(config.seed, "generators"))
        rng = np.random.default_rng(subseed(config.seed, "synthesis"))
        return [_flow_to_obj(aug.synthesize_flow(synth, rng)) for _ in range(count)]


def run_eval(config: RunConfig, model_path: str, variant: str = "actual") -> dict:
    """Re-evaluate a saved model on the config's test split."""
    with _Stage("load"):
        dataset = load_flows(config.dataset)
        with open(model_path, "r", encoding="utf-8") as fh:
            model = CrnnClassifier.from_obj(json.load(fh))
    with _Stage("split"):
        _, test = split(dataset, config.split_fraction, subseed(config.seed, "split"))
    with _Stage("evaluate"):
        report = evaluate(model, test, variant)
        obj = report.to_obj()
        obj["test_set_hash"] = _dataset_hash(test)
        return obj
