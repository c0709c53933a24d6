"""Per-class IoU bookkeeping and the aggregate scores.

Base and Novel are class-group mIoU averages; background is excluded from
Base (it is not an object of interest) but folded back in for the
``base_w_bg`` variant. Classes whose union stays zero across a run are
excluded from the group averages rather than scored 0 or 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import IGNORE_LABEL, ClassPartition
from .errors import MetricUndefinedError, ShapeError


class ConfusionAccumulator:
    """Per-class intersection/union pixel counts; mergeable by addition."""

    def __init__(self, n_classes):
        self.n_classes = int(n_classes)
        self.intersection = np.zeros(self.n_classes, dtype=np.int64)
        self.union = np.zeros(self.n_classes, dtype=np.int64)

    def accumulate(self, prediction, truth):
        pred = np.asarray(prediction).ravel()
        true = np.asarray(truth).ravel()
        if pred.shape != true.shape:
            raise ShapeError(f"prediction {pred.shape} vs truth {true.shape}")
        keep = true != IGNORE_LABEL
        pred = pred[keep].astype(np.int64)
        true = true[keep].astype(np.int64)
        if pred.size and (pred.max() >= self.n_classes or true.max() >= self.n_classes):
            raise ShapeError("class index outside the accumulator range")
        inter = np.bincount(true[pred == true], minlength=self.n_classes)
        pred_counts = np.bincount(pred, minlength=self.n_classes)
        true_counts = np.bincount(true, minlength=self.n_classes)
        self.intersection += inter
        self.union += pred_counts + true_counts - inter
        return self

    def merge(self, other):
        if other.n_classes != self.n_classes:
            raise ShapeError("cannot merge accumulators with different class counts")
        self.intersection += other.intersection
        self.union += other.union
        return self


@dataclass(frozen=True)
class GfssScores:
    per_class_iou: dict
    base: float
    novel: float
    mean: float
    h_mean: float
    base_w_bg: float

    def as_dict(self):
        return {
            "per_class_iou": {str(k): v for k, v in sorted(self.per_class_iou.items())},
            "base": self.base,
            "novel": self.novel,
            "mean": self.mean,
            "h_mean": self.h_mean,
            "base_w_bg": self.base_w_bg,
        }


def _group_mean(iou, classes, name):
    vals = [iou[k] for k in classes if k in iou]
    if not vals:
        raise MetricUndefinedError(f"no {name} class has a nonzero union")
    return float(np.mean(vals))


def scores(acc: ConfusionAccumulator, partition: ClassPartition) -> GfssScores:
    """Reduce an accumulator to per-class IoU and the group aggregates."""
    iou = {
        k: acc.intersection[k] / acc.union[k]
        for k in range(acc.n_classes)
        if acc.union[k] > 0
    }
    ns = partition.novel_start
    base = _group_mean(iou, range(1, ns), "base")
    novel = _group_mean(iou, range(ns, partition.n_classes), "novel")
    mean = (base + novel) / 2.0
    h_mean = 0.0 if base + novel == 0 else 2.0 * base * novel / (base + novel)
    base_w_bg = _group_mean(iou, range(0, ns), "base-with-background")
    return GfssScores(
        per_class_iou=iou,
        base=base,
        novel=novel,
        mean=mean,
        h_mean=h_mean,
        base_w_bg=base_w_bg,
    )


def aggregate_runs(per_run):
    """Mean and sample standard deviation of the aggregate fields across runs."""
    if not per_run:
        raise ShapeError("aggregate_runs needs at least one run")

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return float(arr.mean()), std

    fields = ("base", "novel", "mean", "h_mean", "base_w_bg")
    means, stds = {}, {}
    for name in fields:
        means[name], stds[name] = stats([getattr(s, name) for s in per_run])
    mean_scores = GfssScores(per_class_iou={}, **means)
    std_scores = GfssScores(per_class_iou={}, **stds)
    return mean_scores, std_scores
