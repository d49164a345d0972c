"""Confusion-based similarity metrics and boundary distances (HD, ASD)."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

COLUMNS = ("mDice", "mIOU", "Acc", "Pre", "Sen", "Spe", "HD", "ASD")
_FIELDS = ("mdice", "miou", "acc", "pre", "sen", "spe", "hd", "asd")
SIMILARITY = ("dice", "iou", "acc", "pre", "sen", "spe")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, gt, k):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p = pred == k
    g = gt == k
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def _ratio(num, den, vacuous):
    # zero denominator: 1.0 if the relevant set is empty in both pred and gt, else 0.0
    if den == 0:
        return 1.0 if vacuous else 0.0
    return num / den


def similarity_metrics(c: ConfusionCounts):
    absent = c.tp + c.fp + c.fn == 0
    return {
        "dice": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, absent),
        "iou": _ratio(c.tp, c.tp + c.fp + c.fn, absent),
        "acc": _ratio(c.tp + c.tn, c.total, True),
        "pre": _ratio(c.tp, c.tp + c.fp, c.fn == 0),
        "sen": _ratio(c.tp, c.tp + c.fn, c.fp == 0),
        "spe": _ratio(c.tn, c.tn + c.fp, c.fn == 0),
    }


_CROSS = ndimage.generate_binary_structure(2, 1)


def boundary(mask):
    """Foreground pixels with at least one 4-neighbour outside the mask (image edge counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    inner = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    return mask & ~inner


def _boundary_points(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return np.argwhere(boundary(pred)), np.argwhere(boundary(gt)), pred.shape


def _directed(a, b):
    d, _ = cKDTree(b).query(a)
    return d


def _empty_case(a, b, shape):
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float(math.hypot(*shape))
    return None


def hausdorff(pred, gt):
    a, b, shape = _boundary_points(pred, gt)
    special = _empty_case(a, b, shape)
    if special is not None:
        return special
    return float(max(_directed(a, b).max(), _directed(b, a).max()))


def asd(pred, gt):
    """Average symmetric surface distance over both boundary sets."""
    a, b, shape = _boundary_points(pred, gt)
    special = _empty_case(a, b, shape)
    if special is not None:
        return special
    total = _directed(a, b).sum() + _directed(b, a).sum()
    return float(total / (len(a) + len(b)))


@dataclass
class MetricReport:
    mdice: float
    miou: float
    acc: float
    pre: float
    sen: float
    spe: float
    hd: float
    asd: float
    per_class: dict = field(default_factory=dict)
    per_image_iou: list = field(default_factory=list)

    def values(self):
        return [getattr(self, f) for f in _FIELDS]

    def as_row(self):
        return dict(zip(COLUMNS, self.values()))

    def to_text(self):
        lines = [f"{c}={v!r}" for c, v in self.as_row().items()]
        for cls, metrics in sorted(self.per_class.items()):
            lines += [f"class{cls}.{k}={v!r}" for k, v in metrics.items()]
        if self.per_image_iou:
            lines.append("per_image_iou=" + ",".join(repr(v) for v in self.per_image_iou))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text):
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        values = [float(kv[c]) for c in COLUMNS]
        per_class = {}
        for key, v in kv.items():
            if key.startswith("class") and "." in key:
                cls_id, metric = key[5:].split(".", 1)
                per_class.setdefault(int(cls_id), {})[metric] = float(v)
        ious = [float(v) for v in kv["per_image_iou"].split(",") if v] if "per_image_iou" in kv else []
        return cls(*values, per_class=per_class, per_image_iou=ious)

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def append_results_row(path, framework, report, first_column="Framework"):
    """Append one row to a comma-separated results table, writing the header if new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow([first_column, *COLUMNS])
        vals = [""] * len(COLUMNS) if report is None else [f"{v:.6f}" for v in report.values()]
        w.writerow([framework, *vals])


def evaluate(predictions, gts, num_classes, include_background=False):
    """Average every metric over the evaluated classes of every case.

    Similarity metrics and distances are computed per (case, class) and then
    averaged, so the result does not depend on case order.
    """
    predictions = [np.asarray(p) for p in predictions]
    gts = [np.asarray(g) for g in gts]
    if not predictions:
        raise ValueError("evaluate needs at least one case")
    if len(predictions) != len(gts):
        raise ValueError(f"{len(predictions)} predictions vs {len(gts)} ground truths")
    classes = list(range(0 if include_background else 1, num_classes))
    if not classes:
        raise ValueError("no classes to evaluate")
    keys = SIMILARITY + ("hd", "asd")
    table = np.zeros((len(predictions), len(classes), len(keys)))
    for i, (p, g) in enumerate(zip(predictions, gts)):
        if p.shape != g.shape:
            raise ValueError(f"case {i}: shape mismatch {p.shape} vs {g.shape}")
        for j, k in enumerate(classes):
            sim = similarity_metrics(confusion(p, g, k))
            row = [sim[m] for m in SIMILARITY]
            row += [hausdorff(p == k, g == k), asd(p == k, g == k)]
            table[i, j] = row
    # exactly-rounded sums keep the result bit-identical under case reordering
    class_mean = np.apply_along_axis(math.fsum, 0, table) / len(predictions)
    overall = class_mean.mean(axis=0)
    per_class = {k: dict(zip(keys, map(float, class_mean[j]))) for j, k in enumerate(classes)}
    per_image_iou = [float(v) for v in table[:, :, SIMILARITY.index("iou")].mean(axis=1)]
    return MetricReport(*map(float, overall), per_class=per_class, per_image_iou=per_image_iou)


def iou_histogram(ious, thresholds=None):
    """Per-threshold counts of images: ``exact`` in each bin and ``at_least`` the threshold."""
    ious = np.asarray(ious, dtype=float)
    if thresholds is None:
        thresholds = np.round(np.linspace(0.0, 1.0, 21), 10)
    thresholds = np.asarray(thresholds, dtype=float)
    at_least = np.array([(ious >= t).sum() for t in thresholds], dtype=int)
    upper = np.append(thresholds[1:], np.inf)
    exact = np.array([((ious >= lo) & (ious < hi)).sum() for lo, hi in zip(thresholds, upper)], dtype=int)
    return thresholds, exact, at_least


__all__ = [
    "COLUMNS", "ConfusionCounts", "MetricReport", "append_results_row", "asd",
    "boundary", "confusion", "evaluate", "hausdorff", "iou_histogram", "similarity_metrics",
]
