"""Single-label multiclass metrics in the layout of the published result tables."""
from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import EMOTIONS, LABELS, OPINIONS
from .errors import LabelOutOfRange, LengthMismatch


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class TaskMetrics:
    micro_f1: float
    macro_f1: float
    macro_recall: float
    macro_precision: float
    per_class: dict[str, ClassScores]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsReport:
    opinion: TaskMetrics
    emotion: TaskMetrics

    def to_dict(self) -> dict:
        return {"opinion": self.opinion.to_dict(), "emotion": self.emotion.to_dict()}

    def flat(self) -> dict[str, float]:
        out = {}
        for task in ("opinion", "emotion"):
            m = getattr(self, task)
            for key in ("micro_f1", "macro_f1", "macro_recall", "macro_precision"):
                out[f"{task}.{key}"] = getattr(m, key)
        return out


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _f1(p: float, r: float) -> float:
    return _div(2 * p * r, p + r)


def confusion_matrix(predictions: Sequence[int], gold: Sequence[int], n_classes: int) -> np.ndarray:
    """Rows are gold classes, columns predicted classes."""
    pred, gold = np.asarray(predictions, dtype=np.int64), np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise LengthMismatch(f"{pred.size} predictions for {gold.size} gold labels")
    for arr in (pred, gold):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    return cm


def metrics(predictions: Sequence[int], gold: Sequence[int], labels: Sequence[str]) -> TaskMetrics:
    """Micro scores pool TP/FP/FN over classes; macro scores average over the
    full label set, counting classes with a zero denominator as 0."""
    cm = confusion_matrix(predictions, gold, len(labels))
    tp = np.diag(cm).astype(float)
    fp = cm.sum(0) - tp
    fn = cm.sum(1) - tp
    per_class = {}
    for i, lab in enumerate(labels):
        p, r = _div(tp[i], tp[i] + fp[i]), _div(tp[i], tp[i] + fn[i])
        per_class[lab] = ClassScores(p, r, _f1(p, r), int(cm[i].sum()))
    micro_p = _div(tp.sum(), tp.sum() + fp.sum())
    micro_r = _div(tp.sum(), tp.sum() + fn.sum())
    return TaskMetrics(
        micro_f1=_f1(micro_p, micro_r),
        macro_f1=float(np.mean([c.f1 for c in per_class.values()])),
        macro_recall=float(np.mean([c.recall for c in per_class.values()])),
        macro_precision=float(np.mean([c.precision for c in per_class.values()])),
        per_class=per_class,
    )


def report(op_pred, op_gold, em_pred, em_gold) -> MetricsReport:
    return MetricsReport(metrics(op_pred, op_gold, OPINIONS), metrics(em_pred, em_gold, EMOTIONS))


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation of every headline metric."""
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = reports[0].flat().keys()
    mean, std = {}, {}
    for k in keys:
        vals = [r.flat()[k] for r in reports]
        mean[k] = statistics.fmean(vals)
        std[k] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return {"mean": mean, "std": std, "n": len(reports)}


TABLE_COLUMNS = [(t, k) for t in LABELS for k in ("micro_f1", "macro_f1", "macro_recall", "macro_precision")]


def format_table(rows: dict[str, dict[str, float]]) -> str:
    """Human-readable table, one row per model, values in percent."""
    head = ("Model", "Op Micro F1", "Op Macro F1", "Op Recall", "Op Precision",
            "Em Micro F1", "Em Macro F1", "Em Recall", "Em Precision")
    width = max([len(head[0])] + [len(name) for name in rows]) + 2
    lines = [head[0].ljust(width) + " ".join(h.rjust(12) for h in head[1:])]
    for name, flat in rows.items():
        vals = [100.0 * flat[f"{t}.{k}"] for t, k in TABLE_COLUMNS]
        lines.append(name.ljust(width) + " ".join(f"{v:12.2f}" for v in vals))
    return "\n".join(lines)
