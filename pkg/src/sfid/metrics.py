"""Confusion-count accumulation and IoU / precision / recall / F1 scores.

Dataset scores per category are micro-averaged: counts sum over all images
first, then the metric is computed once. The class average is the unweighted
arithmetic mean of per-category scores. When both prediction and ground
truth are empty, every score is 1.0: a correct "no change" verdict is not
penalized. The degenerate single-sided cases use vacuous precision/recall of
1.0 so that F1 == 2*IoU / (1 + IoU) holds for every possible count tuple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeMismatchError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    p = pred != 0
    g = gt != 0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size - tp - fp - fn)
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def iou(c: ConfusionCounts) -> float:
    union = c.tp + c.fp + c.fn
    if union == 0:
        return 1.0
    return c.tp / union


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    if c.tp + c.fp + c.fn == 0:
        return 1.0, 1.0, 1.0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 1.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class CategoryReport:
    counts: ConfusionCounts
    iou: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    per_category: dict[str, CategoryReport]
    class_average_iou: float
    class_average_f1: float

    def to_dict(self) -> dict:
        return {
            "per_category": {
                name: {
                    "iou": r.iou,
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                    "counts": {
                        "tp": r.counts.tp,
                        "fp": r.counts.fp,
                        "fn": r.counts.fn,
                        "tn": r.counts.tn,
                    },
                }
                for name, r in self.per_category.items()
            },
            "class_average": {
                "iou": self.class_average_iou,
                "f1": self.class_average_f1,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def score_counts(counts: ConfusionCounts) -> CategoryReport:
    precision, recall, f1 = precision_recall_f1(counts)
    return CategoryReport(
        counts=counts, iou=iou(counts), precision=precision, recall=recall, f1=f1
    )


def aggregate_class_average(reports: Sequence[CategoryReport]) -> tuple[float, float]:
    """Unweighted mean of per-category IoU and F1."""
    if not reports:
        raise ValueError("cannot average an empty category list")
    mean_iou = sum(r.iou for r in reports) / len(reports)
    mean_f1 = sum(r.f1 for r in reports) / len(reports)
    return mean_iou, mean_f1


def build_report(counts_by_category: Mapping[str, ConfusionCounts]) -> EvalReport:
    per_category = {name: score_counts(c) for name, c in counts_by_category.items()}
    avg_iou, avg_f1 = aggregate_class_average(list(per_category.values()))
    return EvalReport(
        per_category=per_category,
        class_average_iou=avg_iou,
        class_average_f1=avg_f1,
    )


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text table, scores in percent."""
    rows = [("category", "IoU", "P", "R", "F1", "TP", "FP", "FN")]
    for name, r in report.per_category.items():
        rows.append((
            name,
            f"{100 * r.iou:.1f}",
            f"{100 * r.precision:.1f}",
            f"{100 * r.recall:.1f}",
            f"{100 * r.f1:.1f}",
            str(r.counts.tp),
            str(r.counts.fp),
            str(r.counts.fn),
        ))
    rows.append((
        "class avg",
        f"{100 * report.class_average_iou:.1f}",
        "-",
        "-",
        f"{100 * report.class_average_f1:.1f}",
        "-",
        "-",
        "-",
    ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append("  ".join(cells))
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
