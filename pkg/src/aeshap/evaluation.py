"""Binary evaluation of anomaly scores: confusion matrix, classification
metrics, ROC/AUC and G-mean threshold selection. Class 1 (attack) is positive."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ClassRow:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f_score: float
    specificity: float
    g_mean: float
    class_0: ClassRow
    class_1: ClassRow
    confusion: ConfusionMatrix

    @property
    def macro_avg(self) -> ClassRow:
        a, b = self.class_0, self.class_1
        return ClassRow((a.precision + b.precision) / 2, (a.recall + b.recall) / 2,
                        (a.f1 + b.f1) / 2, a.support + b.support)

    @property
    def weighted_avg(self) -> ClassRow:
        a, b = self.class_0, self.class_1
        n = a.support + b.support
        if n == 0:
            return ClassRow(0.0, 0.0, 0.0, 0)
        wa, wb = a.support / n, b.support / n
        return ClassRow(wa * a.precision + wb * b.precision, wa * a.recall + wb * b.recall,
                        wa * a.f1 + wb * b.f1, n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["macro_avg"] = asdict(self.macro_avg)
        d["weighted_avg"] = asdict(self.weighted_avg)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["accuracy"], d["precision"], d["recall"], d["f_score"],
                   d["specificity"], d["g_mean"], ClassRow(**d["class_0"]),
                   ClassRow(**d["class_1"]), ConfusionMatrix(**d["confusion"]))


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _f1(p: float, r: float) -> float:
    return _div(2 * p * r, p + r)


def classify(scores, threshold: float) -> np.ndarray:
    """1 where score >= threshold (inclusive), else 0."""
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(np.int64)


def confusion(labels, predictions) -> ConfusionMatrix:
    y = np.asarray(labels).astype(np.int64).ravel()
    p = np.asarray(predictions).astype(np.int64).ravel()
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} labels, {p.size} predictions")
    return ConfusionMatrix(tp=int(np.sum((y == 1) & (p == 1))), tn=int(np.sum((y == 0) & (p == 0))),
                           fp=int(np.sum((y == 0) & (p == 1))), fn=int(np.sum((y == 1) & (p == 0))))


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, precision, recall, F-score, specificity and G-mean; 0/0 counts as 0."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    tp, tn, fp, fn = cm.tp, cm.tn, cm.fp, cm.fn
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    specificity = _div(tn, tn + fp)
    npv = _div(tn, tn + fn)
    f = _f1(precision, recall)
    return MetricsReport(
        accuracy=_div(tp + tn, cm.total), precision=precision, recall=recall, f_score=f,
        specificity=specificity, g_mean=math.sqrt(recall * specificity),
        class_0=ClassRow(npv, specificity, _f1(npv, specificity), tn + fp),
        class_1=ClassRow(precision, recall, f, tp + fn), confusion=cm)


def roc(labels, scores) -> RocCurve:
    """ROC over every distinct score, descending, behind a +inf sentinel at (0, 0)."""
    y = np.asarray(labels).astype(np.int64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present in labels")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.r_[0, np.cumsum(y == 1)[ends]].astype(np.int64)
    fps = np.r_[0, np.cumsum(y == 0)[ends]].astype(np.int64)
    fpr = fps / n_neg
    tpr = tps / n_pos
    thresholds = np.r_[np.inf, s[ends]]
    # trapezoids summed in integer counts, one rounding at the end
    twice_area = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(thresholds, fpr, tpr, auc)


def optimal_threshold(curve: RocCurve, labels=None, scores=None) -> tuple[float, float]:
    """Curve threshold maximizing sqrt(tpr * (1 - fpr)); ties go to the larger threshold.

    The +inf sentinel is never returned. When `labels` and `scores` are given,
    the G-mean is recomputed from the actual classification at that threshold.
    """
    if curve.thresholds.size < 2:
        raise ValueError("degenerate ROC curve")
    g = np.sqrt(curve.tpr[1:] * (1.0 - curve.fpr[1:]))
    best = int(np.argmax(g)) + 1
    t = float(curve.thresholds[best])
    gm = float(g[best - 1])
    if labels is not None and scores is not None:
        gm = metrics(confusion(labels, classify(scores, t))).g_mean
    return t, gm


def classification_report(m: MetricsReport, digits: int = 2) -> str:
    """Text table with per-class rows, accuracy, macro and weighted averages."""
    head = ["precision", "recall", "f1-score", "support"]
    width = 12
    lines = [" " * width + "".join(h.rjust(10) for h in head), ""]

    def row(name, r: ClassRow):
        return (name.rjust(width) + f"{r.precision:10.{digits}f}{r.recall:10.{digits}f}"
                f"{r.f1:10.{digits}f}{r.support:10d}")

    lines.append(row("0", m.class_0))
    lines.append(row("1", m.class_1))
    lines.append("")
    n = m.confusion.total
    lines.append("accuracy".rjust(width) + " " * 20 + f"{m.accuracy:10.{digits}f}{n:10d}")
    lines.append(row("macro avg", m.macro_avg))
    lines.append(row("weighted avg", m.weighted_avg))
    lines.append("")
    lines.append("(undefined ratios such as 0/0 are reported as 0)")
    return "\n".join(lines) + "\n"
