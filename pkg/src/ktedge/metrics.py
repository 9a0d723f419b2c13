"""Confusion-matrix accounting, micro/macro aggregation, and trace export.

Zero-denominator convention: a class whose precision, recall or F1 denominator
is zero scores 0 for that metric. Micro values are computed from pooled
TP/FP/FN counts, which for single-label classification makes micro precision,
recall, F1 and accuracy the same number.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ConfusionMatrix:
    """k x k counts; rows are true classes, columns predicted classes."""

    num_classes: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)

    def add(self, true_label: int, predicted: int) -> None:
        self.counts[true_label, predicted] += 1

    def total(self) -> int:
        return int(self.counts.sum())


def score(pairs, num_classes: int) -> ConfusionMatrix:
    """Tallies (true, predicted) pairs into a confusion matrix."""
    cm = ConfusionMatrix(num_classes)
    for true_label, predicted in pairs:
        t, p = int(true_label), int(predicted)
        if not (0 <= t < num_classes and 0 <= p < num_classes):
            raise ValueError(f"label pair ({t}, {p}) out of range for {num_classes} classes")
        cm.counts[t, p] += 1
    return cm


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def report(cm: ConfusionMatrix) -> MetricsReport:
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0).astype(np.float64) - tp
    fn = counts.sum(axis=1).astype(np.float64) - tp

    precision = [_safe_div(t, t + f) for t, f in zip(tp, fp)]
    recall = [_safe_div(t, t + f) for t, f in zip(tp, fn)]
    f1 = [_safe_div(2.0 * p * r, p + r) for p, r in zip(precision, recall)]

    k = cm.num_classes
    tp_s, fp_s, fn_s = tp.sum(), fp.sum(), fn.sum()
    # pooled counts keep micro P == micro R == micro F1 == accuracy exact
    micro_p = _safe_div(tp_s, tp_s + fp_s)
    micro_r = _safe_div(tp_s, tp_s + fn_s)
    micro_f1 = _safe_div(2.0 * tp_s, 2.0 * tp_s + fp_s + fn_s)
    return MetricsReport(
        accuracy=float(tp_s / total),
        micro_precision=float(micro_p),
        micro_recall=float(micro_r),
        micro_f1=float(micro_f1),
        macro_precision=float(sum(precision) / k),
        macro_recall=float(sum(recall) / k),
        macro_f1=float(sum(f1) / k),
        per_class_precision=tuple(precision),
        per_class_recall=tuple(recall),
        per_class_f1=tuple(f1),
    )


@dataclass
class TrainingTrace:
    """Rolling metrics over consecutive windows of `interval` training steps."""

    interval: int = 100
    points: list[tuple[int, float, float]] = field(default_factory=list)  # (step, acc, loss)

    def steps_covered(self) -> int:
        return self.points[-1][0] if self.points else 0


def trace_update(trace: TrainingTrace, step_records) -> TrainingTrace:
    """Appends one (step, rolling accuracy, rolling loss) point per interval
    completed beyond what the trace already covers.

    Step records need `.loss` and a correctness signal: records with ground
    truth score `student_pred == truth`, records without score agreement with
    the pseudo-label.
    """
    n = trace.interval
    start = trace.steps_covered()
    for end in range(start + n, len(step_records) + 1, n):
        window = step_records[end - n:end]
        correct = sum(1 for r in window if _record_correct(r))
        loss = sum(r.loss for r in window) / n
        trace.points.append((end, correct / n, loss))
    return trace


def _record_correct(record) -> bool:
    if record.truth is not None:
        return record.student_pred == record.truth
    return record.student_pred == record.pseudo_label


def _fmt(v: float) -> str:
    return f"{float(v):.6g}"


def export(obj, fmt: str, path) -> None:
    """Writes a MetricsReport or TrainingTrace as csv or json."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(obj, MetricsReport):
        _export_report(obj, fmt, path)
    elif isinstance(obj, TrainingTrace):
        _export_trace(obj, fmt, path)
    else:
        raise TypeError(f"cannot export {type(obj).__name__}")


def _export_report(rep: MetricsReport, fmt: str, path) -> None:
    if fmt == "json":
        payload = {
            "accuracy": float(_fmt(rep.accuracy)),
            "micro": {"precision": float(_fmt(rep.micro_precision)),
                      "recall": float(_fmt(rep.micro_recall)),
                      "f1": float(_fmt(rep.micro_f1))},
            "macro": {"precision": float(_fmt(rep.macro_precision)),
                      "recall": float(_fmt(rep.macro_recall)),
                      "f1": float(_fmt(rep.macro_f1))},
            "per_class": [
                {"class": i, "precision": float(_fmt(p)), "recall": float(_fmt(r)),
                 "f1": float(_fmt(f))}
                for i, (p, r, f) in enumerate(zip(rep.per_class_precision,
                                                  rep.per_class_recall, rep.per_class_f1))],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")
        return
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "precision", "recall", "f1"])
        for i, (p, r, f1) in enumerate(zip(rep.per_class_precision, rep.per_class_recall,
                                           rep.per_class_f1)):
            w.writerow([i, _fmt(p), _fmt(r), _fmt(f1)])
        w.writerow(["accuracy", _fmt(rep.accuracy), "", ""])
        w.writerow(["micro_precision", _fmt(rep.micro_precision), "", ""])
        w.writerow(["micro_recall", _fmt(rep.micro_recall), "", ""])
        w.writerow(["micro_f1", _fmt(rep.micro_f1), "", ""])
        w.writerow(["macro_precision", _fmt(rep.macro_precision), "", ""])
        w.writerow(["macro_recall", _fmt(rep.macro_recall), "", ""])
        w.writerow(["macro_f1", _fmt(rep.macro_f1), "", ""])


def _export_trace(trace: TrainingTrace, fmt: str, path) -> None:
    if fmt == "json":
        payload = {"interval": trace.interval,
                   "points": [{"step": s, "rolling_accuracy": float(_fmt(a)),
                               "rolling_loss": float(_fmt(l))}
                              for s, a, l in trace.points]}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")
        return
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "rolling_accuracy", "rolling_loss"])
        for s, a, l in trace.points:
            w.writerow([s, _fmt(a), _fmt(l)])


def read_report_csv(path) -> dict:
    """Parses a report csv back into {'per_class': {idx: (p, r, f1)}, summaries...}."""
    out = {"per_class": {}}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            name = row["class"]
            if name.isdigit():
                out["per_class"][int(name)] = (float(row["precision"]), float(row["recall"]),
                                               float(row["f1"]))
            else:
                out[name] = float(row["precision"])
    return out


def read_trace_csv(path) -> TrainingTrace:
    points = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            points.append((int(row["step"]), float(row["rolling_accuracy"]),
                           float(row["rolling_loss"])))
    interval = points[0][0] if points else 100
    trace = TrainingTrace(interval=interval)
    trace.points = points
    return trace
