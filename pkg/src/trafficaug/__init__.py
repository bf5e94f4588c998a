"""Minority-class traffic-flow augmentation and classifier comparison.

The pipeline: ingest labeled packets into 20-packet flows, learn per-class
direction/window sequence generators (LSTM) and per-feature densities (KDE),
synthesize flows for under-represented classes, and compare a CRNN trained
on the actual, oversampled and augmented datasets over one shared test split.
"""

from .augment import (
    BalancePlan,
    ClassSynthesizer,
    SynthesizerConfig,
    augment_dataset,
    build_synthesizer,
    default_balance_plan,
    oversample_dataset,
    synthesize_flow,
)
from .classifier import CrnnClassifier
from .density import GaussianKde, silverman_bandwidth
from .evaluation import ConfusionMatrix, EvalReport, compare_runs, confusion, evaluate, metrics
from .flows import (
    ClassStats,
    Dataset,
    FiveTuple,
    FlowRecord,
    PacketFeatureVector,
    Transport,
    class_stats,
    flow_violations,
    ingest_packets,
    load_flows,
    save_flows,
    split,
)
from .seqgen import (
    LstmSequenceGenerator,
    SequenceCorpus,
    Vocabulary,
    build_direction_corpus,
    build_window_corpus,
)
from .experiment import RunConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BalancePlan",
    "ClassStats",
    "ClassSynthesizer",
    "ConfusionMatrix",
    "CrnnClassifier",
    "Dataset",
    "EvalReport",
    "FiveTuple",
    "FlowRecord",
    "GaussianKde",
    "LstmSequenceGenerator",
    "PacketFeatureVector",
    "RunConfig",
    "SequenceCorpus",
    "SynthesizerConfig",
    "Transport",
    "Vocabulary",
    "augment_dataset",
    "build_direction_corpus",
    "build_synthesizer",
    "build_window_corpus",
    "class_stats",
    "compare_runs",
    "confusion",
    "default_balance_plan",
    "evaluate",
    "flow_violations",
    "ingest_packets",
    "load_flows",
    "metrics",
    "oversample_dataset",
    "run_experiment",
    "save_flows",
    "silverman_bandwidth",
    "split",
    "synthesize_flow",
]
