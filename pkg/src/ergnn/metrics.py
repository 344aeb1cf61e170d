"""Thresholded confusion metrics and rank-based AUC for binary fraud labels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


@dataclass(frozen=True)
class Metrics:
    f1: float
    recall: float
    precision: float
    accuracy: float
    auc: float | None  # None when only one class is present
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int, auc: float | None = None) -> "Metrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        return cls(f1, recall, precision, accuracy, auc, int(tp), int(fp), int(fn), int(tn))


def roc_auc(scores, labels) -> float | None:
    """Mann-Whitney AUC with average ranks, so tied scores count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average method
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(probabilities, labels, threshold: float = 0.5) -> Metrics:
    probs = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if probs.size == 0:
        raise ValidationError("no predictions to score")
    if probs.size != labels.size:
        raise ValidationError(f"{probs.size} predictions vs {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be 0 or 1")
    pred = probs >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    return Metrics.from_counts(tp, fp, fn, tn, roc_auc(probs, labels))
