"""Confusion matrices, per-class and aggregate metrics, run comparison.

Per class c, one-vs-rest:

    precision = TP / (TP + FP)      recall = TP / (TP + FN)
    F1 = 2 * precision * recall / (precision + recall)

and overall accuracy = trace / total.  A zero denominator yields 0 and the
(class, metric) pair is flagged in the report.  Aggregates come in macro
(unweighted mean) and weighted (true-class support) forms, both reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("actual", "sampled", "augmented")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer counts; rows are true classes, columns predicted ones."""

    counts: np.ndarray
    class_index: dict[str, int]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=int)
        n = len(self.class_index)
        if counts.shape != (n, n):
            raise ValueError(f"confusion matrix shape {counts.shape} != ({n}, {n})")
        if (counts < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.class_index, key=self.class_index.__getitem__))


def confusion(preds, truth, class_index: dict[str, int]) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise ValueError(f"predictions and truth must be equal-length 1-d,"
                         f" got {preds.shape} and {truth.shape}")
    n = len(class_index)
    if preds.size and (preds.min() < 0 or preds.max() >= n or truth.min() < 0 or truth.max() >= n):
        raise ValueError(f"class ids must lie in [0, {n})")
    counts = np.zeros((n, n), dtype=int)
    np.add.at(counts, (truth, preds), 1)
    return ConfusionMatrix(counts=counts, class_index=dict(class_index))


@dataclass(frozen=True)
class EvalReport:
    variant: str
    class_index: dict[str, int]
    per_class: dict[str, dict[str, float]]
    accuracy: float
    macro: dict[str, float]
    weighted: dict[str, float]
    confusion: np.ndarray
    zero_division: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.class_index, key=self.class_index.__getitem__))

    def to_obj(self) -> dict:
        return {
            "variant": self.variant,
            "classes": list(self.class_names),
            "per_class": {name: dict(vals) for name, vals in self.per_class.items()},
            "overall": {
                "accuracy": self.accuracy,
                "macro": dict(self.macro),
                "weighted": dict(self.weighted),
            },
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "zero_division": [list(pair) for pair in self.zero_division],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "EvalReport":
        class_index = {name: i for i, name in enumerate(obj["classes"])}
        return cls(
            variant=obj["variant"],
            class_index=class_index,
            per_class={k: dict(v) for k, v in obj["per_class"].items()},
            accuracy=float(obj["overall"]["accuracy"]),
            macro=dict(obj["overall"]["macro"]),
            weighted=dict(obj["overall"]["weighted"]),
            confusion=np.array(obj["confusion"], dtype=int),
            zero_division=tuple((c, m) for c, m in obj.get("zero_division", [])),
        )


def metrics(cm: ConfusionMatrix, variant: str = "actual") -> EvalReport:
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    names = cm.class_names
    tp = np.diag(counts).astype(float)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    support = counts.sum(axis=1).astype(float)

    flagged = []
    per_class = {}
    precisions = np.zeros(len(names))
    recalls = np.zeros(len(names))
    f1s = np.zeros(len(names))
    for i, name in enumerate(names):
        if tp[i] + fp[i] > 0:
            precisions[i] = tp[i] / (tp[i] + fp[i])
        else:
            flagged.append((name, "precision"))
        if tp[i] + fn[i] > 0:
            recalls[i] = tp[i] / (tp[i] + fn[i])
        else:
            flagged.append((name, "recall"))
        if precisions[i] + recalls[i] > 0:
            f1s[i] = 2.0 * precisions[i] * recalls[i] / (precisions[i] + recalls[i])
        else:
            flagged.append((name, "f1"))
        per_class[name] = {
            "precision": float(precisions[i]),
            "recall": float(recalls[i]),
            "f1": float(f1s[i]),
            "support": int(support[i]),
        }
    weights = support / total
    return EvalReport(
        variant=variant,
        class_index=dict(cm.class_index),
        per_class=per_class,
        accuracy=float(tp.sum() / total),
        macro={"precision": float(precisions.mean()),
               "recall": float(recalls.mean()),
               "f1": float(f1s.mean())},
        weighted={"precision": float(precisions @ weights),
                  "recall": float(recalls @ weights),
                  "f1": float(f1s @ weights)},
        confusion=counts.copy(),
        zero_division=tuple(flagged),
    )


def evaluate(model, test, variant: str) -> EvalReport:
    """Predict a labeled dataset with a fitted classifier and score it."""
    truth = [model.class_index_[f.label] for f in test.flows]
    preds = model.predict(test.flows)
    return metrics(confusion(preds, truth, model.class_index_), variant=variant)


# ---------------------------------------------------------------------------
# Comparison across dataset variants

def compare_runs(reports: list[EvalReport]) -> dict:
    """Side-by-side per-class and overall tables with deltas vs the baseline.

    The baseline is the report tagged ``actual`` when present, otherwise the
    first report.  Returns a dict with ``per_class``, ``overall``, ``deltas``
    (percentage points vs baseline), ``plot_rows`` (long-format
    class/variant/metric/value tuples) and a human-readable ``summary``.
    """
    if not reports:
        raise ValueError("need at least one report to compare")
    names = reports[0].class_names
    for rep in reports[1:]:
        if rep.class_names != names:
            raise ValueError(f"reports disagree on classes:"
                             f" {rep.class_names} vs {names}")
    baseline = next((r for r in reports if r.variant == "actual"), reports[0])

    per_class = {
        name: {metric: {r.variant: r.per_class[name][metric] for r in reports}
               for metric in ("precision", "recall", "f1")}
        for name in names
    }
    overall = {
        r.variant: {"accuracy": r.accuracy, "macro": dict(r.macro), "weighted": dict(r.weighted)}
        for r in reports
    }
    deltas = {
        r.variant: {
            "accuracy_points": 100.0 * (r.accuracy - baseline.accuracy),
            "macro_f1_points": 100.0 * (r.macro["f1"] - baseline.macro["f1"]),
            "weighted_f1_points": 100.0 * (r.weighted["f1"] - baseline.weighted["f1"]),
        }
        for r in reports
    }
    plot_rows = [
        (name, r.variant, metric, r.per_class[name][metric])
        for name in names
        for r in reports
        for metric in ("precision", "recall", "f1")
    ]

    lines = [f"baseline variant: {baseline.variant}"]
    for r in reports:
        d = deltas[r.variant]
        lines.append(
            f"{r.variant}: accuracy {r.accuracy:.4f}"
            f" ({d['accuracy_points']:+.2f} points vs {baseline.variant}),"
            f" macro-F1 {r.macro['f1']:.4f},"
            f" weighted-F1 {r.weighted['f1']:.4f}")
    return {
        "per_class": per_class,
        "overall": overall,
        "deltas": deltas,
        "plot_rows": plot_rows,
        "summary": "\n".join(lines),
    }


def plot_rows_to_csv(plot_rows) -> str:
    """Long-format ``class,variant,metric,value`` CSV text."""
    lines = ["class,variant,metric,value"]
    for name, variant, metric, value in plot_rows:
        lines.append(f"{name},{variant},{metric},{value!r}")
    return "\n".join(lines) + "\n"
