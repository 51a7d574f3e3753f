"""Confusion matrices, per-class IoU, and subset/zero-fill mean IoU.

A class absent from both ground truth and predictions has *undefined* IoU
(NaN marker), never 0 or 1; averaging conventions that count never-predicted
classes as 0 are expressed explicitly through the zero-fill list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .raster import IGNORE_ID, LabelRaster
from .taxonomy import Taxonomy


@dataclass
class ConfusionMatrix:
    """Square count matrix indexed (ground-truth class, predicted class)."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")
        self.counts = arr

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def merged(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise ValueError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True)
class MIoUSpec:
    """Which classes to average and which never-predicted classes count as 0."""

    class_subset: tuple[int, ...]
    zero_fill: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        subset = tuple(self.class_subset)
        zero_fill = tuple(self.zero_fill)
        if set(subset) & set(zero_fill):
            raise ValueError("class subset and zero-fill lists must be disjoint")
        object.__setattr__(self, "class_subset", subset)
        object.__setattr__(self, "zero_fill", zero_fill)


def accumulate_confusion(
    pred: LabelRaster, gt: LabelRaster, matrix: ConfusionMatrix
) -> ConfusionMatrix:
    """Add one image's (gt, pred) tallies into ``matrix`` (mutated and returned).

    Pixels with ignore ground truth are unscored. Any other id must be a
    valid matrix index; a prediction of ignore on a scored pixel is an error.
    """
    if pred.data.shape != gt.data.shape:
        raise ValueError("prediction and ground-truth shapes differ")
    num = matrix.num_classes
    scored = gt.data != IGNORE_ID
    gt_ids = gt.data[scored].astype(np.int64)
    pred_ids = pred.data[scored].astype(np.int64)
    if gt_ids.size:
        if gt_ids.max() >= num:
            raise ValueError(f"ground-truth id {gt_ids.max()} >= num_classes {num}")
        if pred_ids.max() >= num:
            raise ValueError(f"predicted id {pred_ids.max()} >= num_classes {num}")
        flat = np.bincount(gt_ids * num + pred_ids, minlength=num * num)
        matrix.counts += flat.reshape(num, num)
    return matrix


def iou_per_class(matrix: ConfusionMatrix) -> np.ndarray:
    """IoU = TP / (TP + FP + FN) per class; NaN where the class never occurs."""
    counts = matrix.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(denom > 0, tp / denom, np.nan)
    return iou


def mean_iou(ious: Sequence[float] | np.ndarray, spec: MIoUSpec) -> float:
    """Average IoU over the subset, counting each zero-fill class as 0.

    The denominator is |subset| + |zero_fill|. Every subset class must have
    a defined IoU.
    """
    arr = np.asarray(ious, dtype=np.float64)
    values = []
    for cid in spec.class_subset:
        if cid < 0 or cid >= arr.size:
            raise ValueError(f"class {cid} outside the IoU vector")
        if np.isnan(arr[cid]):
            raise ValueError(f"class {cid} has undefined IoU; cannot average it")
        values.append(float(arr[cid]))
    total = sum(values)  # zero-fill classes contribute 0 to the numerator
    denominator = len(spec.class_subset) + len(spec.zero_fill)
    if denominator == 0:
        raise ValueError("empty mIoU spec")
    return total / denominator


def format_iou_table(ious: np.ndarray, taxonomy: Taxonomy | None = None) -> str:
    """Human-readable aligned per-class IoU table."""
    rows = []
    for cid, value in enumerate(ious):
        if taxonomy is not None and not taxonomy.has_id(cid):
            continue
        name = taxonomy.class_by_id(cid).name if taxonomy is not None else str(cid)
        shown = "   n/a" if np.isnan(value) else f"{value:6.4f}"
        rows.append((str(cid), name, shown))
    width = max((len(name) for _, name, _ in rows), default=4)
    lines = [f"{'id':>3}  {'class':<{width}}  {'IoU':>6}"]
    for cid, name, shown in rows:
        lines.append(f"{cid:>3}  {name:<{width}}  {shown:>6}")
    return "\n".join(lines)
