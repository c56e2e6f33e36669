"""Exact segmentation evaluation: confusion matrix, pixel accuracy, per-class
IoU and mIoU, with ignore-label accounting.

Counts accumulate as integers and division happens only at report time: the
mean IoU is formed in exact rational arithmetic and rounded once, so e.g.
counts [[1,1],[0,2]] give exactly float(7/12). Per-image matrices merge into
dataset totals without rounding. A class that appears in neither truth nor
prediction has an undefined IoU and is excluded from the mean.
"""

import json
from fractions import Fraction

import numpy as np

from .errors import ValidationError


class ConfusionMatrix:
    def __init__(self, num_classes):
        if num_classes < 1:
            raise ValidationError(f"need at least one class, got {num_classes}")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.ignored_pixels = 0

    def update(self, prediction, truth, ignore_index=255):
        """Tally one pair of label maps; rows are truth, columns prediction."""
        pred = np.asarray(prediction)
        true = np.asarray(truth)
        if pred.shape != true.shape:
            raise ValidationError(
                f"prediction shape {pred.shape} != truth shape {true.shape}")
        k = self.num_classes
        bad_pred = (pred < 0) | (pred >= k)
        if bad_pred.any():
            where = tuple(int(v) for v in np.argwhere(bad_pred)[0])
            raise ValidationError(
                f"prediction {int(pred[where])} at {where} outside [0,{k})")
        keep = true != ignore_index
        bad_true = keep & ((true < 0) | (true >= k))
        if bad_true.any():
            where = tuple(int(v) for v in np.argwhere(bad_true)[0])
            raise ValidationError(
                f"truth label {int(true[where])} at {where} outside [0,{k}) and not ignored")
        flat = k * true[keep].astype(np.int64) + pred[keep].astype(np.int64)
        self.counts += np.bincount(flat, minlength=k * k).reshape(k, k)
        self.ignored_pixels += int((~keep).sum())
        return self

    def merge(self, other):
        if other.num_classes != self.num_classes:
            raise ValidationError("cannot merge matrices with different class counts")
        self.counts += other.counts
        self.ignored_pixels += other.ignored_pixels
        return self

    def total_pixels(self):
        return int(self.counts.sum()) + self.ignored_pixels

    def pixel_accuracy(self):
        total = int(self.counts.sum())
        if total == 0:
            raise ValidationError("no non-ignored pixels: accuracy undefined")
        return float(np.trace(self.counts)) / total

    def mean_iou(self):
        """(mIoU, per-class list) with None for classes whose denominator is
        zero; those classes are excluded from the mean."""
        if int(self.counts.sum()) == 0:
            raise ValidationError("no non-ignored pixels: mIoU undefined")
        per_class = []
        defined = []
        for c in range(self.num_classes):
            tp = int(self.counts[c, c])
            denom = int(self.counts[c, :].sum()) + int(self.counts[:, c].sum()) - tp
            if denom == 0:
                per_class.append(None)
            else:
                per_class.append(tp / denom)
                defined.append(Fraction(tp, denom))
        if not defined:
            raise ValidationError("every class has undefined IoU")
        mean = float(sum(defined) / len(defined))
        return mean, per_class

    def report(self):
        miou, per_class = self.mean_iou()
        return {
            "pixel_accuracy": self.pixel_accuracy(),
            "mean_iou": miou,
            "per_class_iou": per_class,
            "confusion": [int(v) for v in self.counts.reshape(-1)],
            "ignored_pixels": self.ignored_pixels,
        }

    def report_json(self, indent=None):
        return json.dumps(self.report(), indent=indent)
