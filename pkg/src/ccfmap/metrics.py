"""Evaluation of predicted masks: confusion tallies, accuracy, IoU.

Conventions: truth pixels labeled 255 are skipped entirely; a prediction
of 255 against a labeled truth pixel is a distinguished "abstain" miss
(it counts against accuracy and the truth class's IoU but belongs to no
predicted class). All tallies are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

UNLABELED = 255


@dataclass(frozen=True)
class ConfusionMatrix:
    """k x k counts (rows truth, cols predicted) plus the abstain column
    and the skipped-pixel tally."""

    counts: np.ndarray  # (k, k) int64
    abstain: np.ndarray  # (k,) int64: truth labeled, prediction 255
    skipped: int  # truth 255

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        a = np.asarray(self.abstain, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError(f"counts must be square, got shape {c.shape}")
        if a.shape != (c.shape[0],):
            raise DataError(
                f"abstain must have one entry per class, got shape {a.shape}"
            )
        if (c < 0).any() or (a < 0).any() or self.skipped < 0:
            raise DataError("negative tallies")
        c = c.copy()
        c.setflags(write=False)
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "abstain", a)
        object.__setattr__(self, "skipped", int(self.skipped))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        """Evaluated pixels: every labeled-truth pixel, abstentions included."""
        return int(self.counts.sum() + self.abstain.sum())


def confusion(pred, truth, n_classes: int = 2) -> ConfusionMatrix:
    """Tally predictions against ground truth over any same-shaped arrays."""
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise DataError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    if not isinstance(n_classes, (int, np.integer)) or n_classes < 2:
        raise DataError(f"n_classes must be >= 2, got {n_classes!r}")
    k = int(n_classes)
    for name, arr in (("pred", p), ("truth", t)):
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            raise DataError(f"{name} must be an integer array, got {arr.dtype}")
        legal = ((arr >= 0) & (arr < k)) | (arr == UNLABELED)
        if not legal.all():
            bad = arr[~legal].ravel()[0]
            raise DataError(f"{name} contains illegal label {bad}")

    evaluated = t != UNLABELED
    skipped = int(t.size - evaluated.sum())
    ti = t[evaluated].astype(np.int64)
    pi = p[evaluated].astype(np.int64)
    pi = np.where(pi == UNLABELED, k, pi)  # abstain gets column k
    table = np.bincount(ti * (k + 1) + pi, minlength=k * (k + 1)).reshape(k, k + 1)
    return ConfusionMatrix(counts=table[:, :k], abstain=table[:, k], skipped=skipped)


def pixel_accuracy(c: ConfusionMatrix) -> float:
    """Fraction of evaluated pixels predicted correctly: trace / total."""
    total = c.total
    if total == 0:
        raise DataError("undefined metric: no evaluated pixels")
    return float(np.trace(c.counts)) / total


def mean_iou(c: ConfusionMatrix, zero_union_as_zero: bool = False):
    """Per-class IoU = TP/(TP+FP+FN) and their unweighted mean.

    A class absent from both prediction and truth has zero union; by
    default it is undefined (None) and excluded from the mean. With
    zero_union_as_zero=True the alternative convention scores it 0.0 and
    keeps it in the mean.
    """
    if c.total == 0:
        raise DataError("undefined metric: no evaluated pixels")
    ious = []
    for i in range(c.n_classes):
        tp = int(c.counts[i, i])
        fp = int(c.counts[:, i].sum()) - tp
        fn = int(c.counts[i, :].sum() + c.abstain[i]) - tp
        union = tp + fp + fn
        if union == 0:
            ious.append(0.0 if zero_union_as_zero else None)
        else:
            ious.append(tp / union)
    defined = [v for v in ious if v is not None]
    if not defined:
        raise DataError("undefined metric: all classes have zero union")
    return tuple(ious), sum(defined) / len(defined)


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    pixel_accuracy: float
    iou_per_class: tuple
    mean_iou: float
    evaluated_pixels: int
    skipped_pixels: int


def evaluate(pred, truth, n_classes: int = 2,
             zero_union_as_zero: bool = False) -> EvalReport:
    """confusion + both headline metrics in one report."""
    c = confusion(pred, truth, n_classes)
    acc = pixel_accuracy(c)
    ious, miou = mean_iou(c, zero_union_as_zero=zero_union_as_zero)
    return EvalReport(
        confusion=c,
        pixel_accuracy=acc,
        iou_per_class=ious,
        mean_iou=miou,
        evaluated_pixels=c.total,
        skipped_pixels=c.skipped,
    )
