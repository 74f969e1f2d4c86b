"""Confusion matrices and IoU reports over dataset-summed pixel counts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import LabelMask, PartTaxonomy, _frozen


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = ground truth, columns = prediction

    @classmethod
    def empty(cls, num_labels: int) -> "ConfusionMatrix":
        return cls(_frozen(np.zeros((num_labels, num_labels), np.int64)))

    @property
    def num_labels(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(_frozen(self.counts + other.counts))


def accumulate(pred: LabelMask, gt: LabelMask, matrix: ConfusionMatrix | None = None) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    n = matrix.num_labels if matrix is not None else max(pred.num_labels, gt.num_labels)
    p = pred.labels.ravel().astype(np.int64)
    g = gt.labels.ravel().astype(np.int64)
    if p.max(initial=0) >= n or g.max(initial=0) >= n:
        raise ValueError(f"labels exceed matrix size {n}")
    counts = np.bincount(g * n + p, minlength=n * n).reshape(n, n)
    if matrix is not None:
        counts = counts + matrix.counts
    return ConfusionMatrix(_frozen(counts))


def confusion_over(pairs: Iterable[tuple[LabelMask, LabelMask]], num_labels: int) -> ConfusionMatrix:
    total = ConfusionMatrix.empty(num_labels)
    for pred, gt in pairs:
        total = accumulate(pred, gt, total)
    return total


def class_iou(counts: np.ndarray) -> np.ndarray:
    """IoU per class; NaN for classes absent from both ground truth and prediction."""
    counts = np.asarray(counts, dtype=np.float64)
    diag = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - diag
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, diag / np.where(union > 0, union, 1.0), np.nan)


def mean_iou(ious: Sequence[float]) -> float:
    vals = np.asarray(ious, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    return float(vals.mean()) if len(vals) else float("nan")


@dataclass(frozen=True)
class IoUReport:
    names: tuple[str, ...]
    per_class: tuple[float, ...]
    mean: float
    object: float

    def rows(self) -> list[tuple[str, float]]:
        return list(zip(self.names, self.per_class)) + [("mean", self.mean), ("object", self.object)]


def object_matrix(matrix: ConfusionMatrix) -> np.ndarray:
    c = matrix.counts
    return np.array([[c[0, 0], c[0, 1:].sum()], [c[1:, 0].sum(), c[1:, 1:].sum()]])


def iou_report(matrix: ConfusionMatrix, taxonomy: PartTaxonomy | None = None) -> IoUReport:
    if matrix.total <= 0:
        raise ValueError("confusion matrix is empty")
    taxonomy = taxonomy or PartTaxonomy()
    if taxonomy.num_labels != matrix.num_labels:
        raise ValueError("taxonomy and matrix disagree on the number of labels")
    ious = class_iou(matrix.counts)
    # report order: parts first, background last
    names = taxonomy.parts + ("bg",)
    per_class = tuple(float(v) for v in np.concatenate([ious[1:], ious[:1]]))
    return IoUReport(names, per_class, mean_iou(ious), float(class_iou(object_matrix(matrix))[1]))
