"""Threshold metrics, ROC curves, AUC, and tabular model reports."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

COLUMNS = ("Model", "Accuracy", "Precision", "Recall", "F1", "AUC-ROC")


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if len(s) != len(y):
        raise DataError(f"{len(s)} scores but {len(y)} labels")
    if len(s) == 0:
        raise DataError("no subjects to evaluate")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    return s, y.astype(np.int64)


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: float = 0.5

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion_at_threshold(scores, labels, threshold=0.5):
    """Predict positive iff score >= threshold."""
    s, y = _check(scores, labels)
    pred = s >= threshold
    return ConfusionMatrix(
        tp=int(np.sum(pred & (y == 1))),
        fp=int(np.sum(pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
        tn=int(np.sum(~pred & (y == 0))),
        threshold=threshold,
    )


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: set = field(default_factory=set)


def f1_from(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def classification_metrics(cm):
    """Accuracy, precision, recall, F1. Undefined ratios come back as 0 and are named in ``degenerate``."""
    if cm.total < 1:
        raise DataError("confusion matrix is empty")
    flags = set()
    acc = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp == 0:
        precision = 0.0
        flags.add("precision")
    else:
        precision = cm.tp / (cm.tp + cm.fp)
    if cm.tp + cm.fn == 0:
        recall = 0.0
        flags.add("recall")
    else:
        recall = cm.tp / (cm.tp + cm.fn)
    if precision + recall == 0:
        flags.add("f1")
    return ClassificationMetrics(acc, precision, recall, f1_from(precision, recall), flags)


def _both_classes(y):
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DataError("ROC/AUC need both classes present")


def roc_points(scores, labels):
    """(fpr, tpr) vertices of the ROC path from a descending sweep over distinct scores.

    Tied scores move diagonally in one step; points lying on a straight run
    between their neighbours are dropped.
    """
    s, y = _check(scores, labels)
    _both_classes(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = [0] + np.cumsum(y)[ends].tolist()
    fps = [0] + ((ends + 1) - np.array(tps[1:])).tolist()
    P, N = int(y.sum()), int(len(y) - y.sum())
    keep = [0]
    for i in range(1, len(tps) - 1):
        a, b = keep[-1], i + 1
        # exact integer collinearity test on (fp, tp) counts
        if (fps[i] - fps[a]) * (tps[b] - tps[i]) != (tps[i] - tps[a]) * (fps[b] - fps[i]):
            keep.append(i)
    keep.append(len(tps) - 1)
    return [(fps[i] / N, tps[i] / P) for i in keep]


def auc_score(scores, labels):
    """Trapezoidal area under ``roc_points``."""
    pts = np.array(roc_points(scores, labels))
    fpr, tpr = pts[:, 0], pts[:, 1]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class ReportRow:
    model: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    roc: list = field(default_factory=list, repr=False)

    def values(self):
        return (self.accuracy, self.precision, self.recall, self.f1, self.auc)


@dataclass
class MetricsReport:
    rows: list
    dataset: str = ""
    seed: int | None = None

    def row(self, name):
        for r in self.rows:
            if r.model == name:
                return r
        raise KeyError(name)

    def to_dict(self, digits=6):
        return {
            "dataset": self.dataset,
            "seed": self.seed,
            "columns": list(COLUMNS),
            "rows": [
                {"Model": r.model, **{c: round(v, digits) for c, v in zip(COLUMNS[1:], r.values())}}
                for r in self.rows
            ],
        }

    def to_json(self, digits=6):
        return json.dumps(self.to_dict(digits), indent=2) + "\n"

    def to_text(self, digits=4):
        width = max([len(COLUMNS[0])] + [len(r.model) for r in self.rows])
        lines = [f"{COLUMNS[0]:<{width}}  " + "  ".join(f"{c:>9}" for c in COLUMNS[1:])]
        for r in self.rows:
            lines.append(f"{r.model:<{width}}  " + "  ".join(f"{v:>9.{digits}f}" for v in r.values()))
        return "\n".join(lines) + "\n"


def build_report(score_sets, threshold=0.5, dataset="", seed=None):
    """One row per named (scores, labels) pair, in the mapping's order."""
    rows = []
    for name, (scores, labels) in score_sets.items():
        cm = confusion_at_threshold(scores, labels, threshold)
        m = classification_metrics(cm)
        rows.append(
            ReportRow(name, m.accuracy, m.precision, m.recall, m.f1, auc_score(scores, labels), roc_points(scores, labels))
        )
    return MetricsReport(rows, dataset, seed)
