"""Supervised and pseudo-label losses and their ramp-weighted combination."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError
from .semi_supervision import Prediction, make_pseudo_label

DICE_SMOOTH = 1e-5


def _logits(p):
    return p.logits if isinstance(p, Prediction) else p


def _check_labels(logits, labels):
    K = logits.shape[1]
    if labels.shape != (logits.shape[0], *logits.shape[2:]):
        raise ValueError(f"labels {tuple(labels.shape)} do not match logits {tuple(logits.shape)}")
    if labels.numel() and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"label values must lie in [0, {K}); got [{int(labels.min())}, {int(labels.max())}]")


def ce_loss(logits, labels):
    """Mean pixel-wise cross-entropy."""
    logits = _logits(logits)
    _check_labels(logits, labels)
    return F.cross_entropy(logits, labels.long())


def dice_loss(logits, labels, smooth=DICE_SMOOTH):
    """1 - mean over classes of the soft Dice between softmax probabilities and one-hot labels."""
    logits = _logits(logits)
    _check_labels(logits, labels)
    K = logits.shape[1]
    probs = logits.softmax(dim=1)
    onehot = F.one_hot(labels.long(), K).movedim(-1, 1).to(probs.dtype)
    dims = (0, *range(2, probs.ndim))
    inter = (probs * onehot).sum(dims)
    denom = probs.sum(dims) + onehot.sum(dims)
    dice = (2 * inter + smooth) / (denom + smooth)
    return 1.0 - dice.mean()


def sup_loss(p, gt):
    return 0.5 * (ce_loss(p, gt) + dice_loss(p, gt))


def semi_loss(target: Prediction, source: Prediction):
    """Cross-entropy of ``target`` against the argmax pseudo label of ``source``."""
    if target.source == source.source:
        raise ConfigurationError(f"network {target.source!r} cannot supervise itself")
    if target.logits.shape != source.logits.shape:
        raise ValueError(f"prediction shapes differ: {tuple(target.logits.shape)} vs {tuple(source.logits.shape)}")
    return ce_loss(target.logits, make_pseudo_label(source))


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term loss values of one iteration.

    ``semi_cps`` holds the learner-to-learner terms weighted by ``lambda1``;
    ``semi_guide`` holds the teacher-sourced terms weighted by ``lambda2``.
    """

    sup: tuple
    semi_cps: tuple
    semi_guide: tuple
    lambda1: float
    lambda2: float
    total: float

    @property
    def semi(self):
        return self.semi_cps + self.semi_guide

    def fields(self):
        out = {f"sup{i + 1}": v for i, v in enumerate(self.sup)}
        out.update({f"semi{i + 1}": v for i, v in enumerate(self.semi)})
        out["lambda1"] = self.lambda1
        out["lambda2"] = self.lambda2
        out["total"] = self.total
        return out


def weighted_total(sup, semi_cps, semi_guide, lambda1, lambda2):
    """sum(sup) + lambda1 * sum(semi_cps) + lambda2 * sum(semi_guide); works on floats or tensors."""
    return sum(sup) + lambda1 * sum(semi_cps) + lambda2 * sum(semi_guide)


def _scalar(v):
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def total_loss(sup, semi_cps, semi_guide, lambda1, lambda2):
    vals = [tuple(_scalar(v) for v in group) for group in (sup, semi_cps, semi_guide)]
    total = weighted_total(*vals, lambda1, lambda2)
    return LossBreakdown(*vals, float(lambda1), float(lambda2), float(total))
