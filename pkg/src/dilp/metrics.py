"""Confusion-matrix classification metrics, including Matthews correlation.

Zero-denominator metrics come back as 0.0 with the metric name recorded in
``degenerate`` instead of NaN, so result tables always print.  The MCC
products are taken in exact integer arithmetic before the final division,
which keeps million-row evaluations overflow-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyEvaluation, LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    degenerate: tuple[str, ...] = ()

    def as_text(self) -> str:
        lines = [
            f"accuracy={self.accuracy:.6f}",
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f1={self.f1:.6f}",
            f"mcc={self.mcc:.6f}",
        ]
        if self.degenerate:
            lines.append("degenerate=" + ",".join(self.degenerate))
        return "\n".join(lines)


CSV_HEADER = "experiment,split,accuracy,precision,recall,f1,mcc"


def csv_row(report: MetricsReport, experiment: str, split: str) -> str:
    return (
        f"{experiment},{split},{report.accuracy:.6f},{report.precision:.6f},"
        f"{report.recall:.6f},{report.f1:.6f},{report.mcc:.6f}"
    )


def confusion(predictions: Sequence[bool], labels: Sequence[bool]) -> ConfusionMatrix:
    if len(predictions) != len(labels):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(labels)} labels"
        )
    tp = fp = tn = fn = 0
    for pred, label in zip(predictions, labels):
        if pred and label:
            tp += 1
        elif pred and not label:
            fp += 1
        elif not pred and label:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise EmptyEvaluation("no examples to evaluate")
    degenerate = []

    def ratio(numerator: int, denominator: int, name: str) -> float:
        if denominator == 0:
            degenerate.append(name)
            return 0.0
        return numerator / denominator

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1")
    mcc_num = cm.tp * cm.tn - cm.fp * cm.fn
    mcc_den_sq = (
        (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    )
    if mcc_den_sq == 0:
        degenerate.append("mcc")
        mcc = 0.0
    else:
        root = math.isqrt(mcc_den_sq)
        if root * root == mcc_den_sq:
            mcc = mcc_num / root
        else:
            try:
                mcc = mcc_num / math.sqrt(mcc_den_sq)
            except OverflowError:
                mcc = mcc_num / root
    return MetricsReport(accuracy, precision, recall, f1, mcc, tuple(degenerate))
