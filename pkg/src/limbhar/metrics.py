"""Confusion matrices, accuracy and F1, fold aggregation, heatmap output."""

from __future__ import annotations

import csv
import html
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, LabelError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class_f1: tuple
    confusion: ConfusionMatrix
    n_windows: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": list(self.per_class_f1),
            "n_windows": self.n_windows,
            "confusion": self.confusion.counts.tolist(),
        }


def confusion(predictions: Sequence[int], labels: Sequence[int], n_classes: int) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ContractError(f"{pred.size} predictions for {true.size} labels")
    for name, arr in (("prediction", pred), ("label", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelError(f"{name} index outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, per-class F1 and macro F1.

    Precision, recall and F1 are 0 whenever their denominator is 0; the macro
    average runs over all classes, including ones absent from the data.
    """
    counts = cm.counts
    total = int(counts.sum())
    if total == 0:
        raise ContractError("metrics of an empty confusion matrix")
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    f1 = []
    for c in range(cm.n_classes):
        tp = float(counts[c, c])
        precision = _ratio(tp, float(col[c]))
        recall = _ratio(tp, float(row[c]))
        f1.append(_ratio(2.0 * precision * recall, precision + recall))
    return MetricsReport(
        accuracy=float(np.trace(counts)) / total,
        macro_f1=sum(f1) / len(f1),
        per_class_f1=tuple(f1),
        confusion=cm,
        n_windows=total,
    )


@dataclass(frozen=True)
class CVAggregate:
    """Across-fold summary.

    ``mean_*``/``std_*`` are the unweighted mean and population standard
    deviation of the fold metrics; ``pooled`` is computed on the element-wise
    sum of the fold confusion matrices.
    """

    n_folds: int
    mean_accuracy: float
    std_accuracy: float
    mean_macro_f1: float
    std_macro_f1: float
    pooled: MetricsReport

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_macro_f1": self.mean_macro_f1,
            "std_macro_f1": self.std_macro_f1,
            "pooled": self.pooled.to_dict(),
        }


def aggregate_cv(fold_reports: Sequence[MetricsReport]) -> CVAggregate:
    if not fold_reports:
        raise ContractError("aggregate_cv needs at least one fold report")
    # statistics gives exact results on degenerate input (identical folds -> std 0)
    acc = [r.accuracy for r in fold_reports]
    f1 = [r.macro_f1 for r in fold_reports]
    pooled = ConfusionMatrix(sum(r.confusion.counts for r in fold_reports))
    return CVAggregate(
        n_folds=len(fold_reports),
        mean_accuracy=statistics.fmean(acc),
        std_accuracy=statistics.pstdev(acc),
        mean_macro_f1=statistics.fmean(f1),
        std_macro_f1=statistics.pstdev(f1),
        pooled=metrics(pooled),
    )


# ---------------------------------------------------------------------- output


def write_confusion_csv(cm: ConfusionMatrix, path, class_names: Optional[Sequence[str]] = None) -> None:
    names = list(class_names) if class_names is not None else [str(i) for i in range(cm.n_classes)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\pred", *names])
        for name, row in zip(names, cm.counts):
            writer.writerow([name, *(int(v) for v in row)])


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return ConfusionMatrix(np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64))


def _blend(frac: float) -> str:
    lo, hi = (247, 251, 255), (8, 48, 107)
    rgb = [round(a + (b - a) * frac) for a, b in zip(lo, hi)]
    return "#%02x%02x%02x" % tuple(rgb)


def render_confusion(cm: ConfusionMatrix, class_names: Optional[Sequence[str]], path, title: str = "") -> Path:
    """Write an SVG heatmap of row-normalised ``cm`` and a CSV of raw counts.

    The CSV goes next to the SVG with the same stem.  Rows with no windows
    are drawn in the zero colour.
    """
    path = Path(path)
    n = cm.n_classes
    names = list(class_names) if class_names is not None else [str(i) for i in range(n)]
    if len(names) != n:
        raise ContractError(f"{len(names)} class names for {n} classes")
    row_sums = cm.counts.sum(axis=1)
    cell, left, top = 48, 110, 70
    size_w = left + n * cell + 30
    size_h = top + n * cell + 70
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_w}" height="{size_h}" '
        f'viewBox="0 0 {size_w} {size_h}" font-family="sans-serif">',
        f'<rect width="{size_w}" height="{size_h}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(f'<text x="{size_w / 2:.1f}" y="24" text-anchor="middle" font-size="15">{html.escape(title)}</text>')
    for i in range(n):
        for j in range(n):
            frac = cm.counts[i, j] / row_sums[i] if row_sums[i] > 0 else 0.0
            x, y = left + j * cell, top + i * cell
            ink = "#ffffff" if frac > 0.5 else "#000000"
            parts.append(
                f'<rect class="cell" data-row="{i}" data-col="{j}" x="{x}" y="{y}" width="{cell}" '
                f'height="{cell}" fill="{_blend(frac)}" stroke="#cccccc"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 5:.1f}" text-anchor="middle" '
                f'font-size="13" fill="{ink}">{int(cm.counts[i, j])}</text>'
            )
    for k, name in enumerate(names):
        label = html.escape(str(name))
        parts.append(
            f'<text x="{left - 8}" y="{top + k * cell + cell / 2 + 5:.1f}" text-anchor="end" font-size="12">{label}</text>'
        )
        parts.append(
            f'<text x="{left + k * cell + cell / 2:.1f}" y="{top + n * cell + 18}" text-anchor="middle" font-size="12">{label}</text>'
        )
    parts.append(f'<text x="{left + n * cell / 2:.1f}" y="{top + n * cell + 45}" text-anchor="middle" font-size="13">Predicted</text>')
    parts.append(
        f'<text x="20" y="{top + n * cell / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 20 {top + n * cell / 2:.1f})">True</text>'
    )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    write_confusion_csv(cm, path.with_suffix(".csv"), names)
    return path
