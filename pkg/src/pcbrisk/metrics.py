"""Ranking metrics and concept-accuracy scores.

auroc uses the Mann-Whitney convention (ties get half credit); auprc is
step-wise average precision over distinct thresholds. Both are checked
bit-exactly against exhaustive brute-force oracles in the test suite, so
the term arithmetic here follows the published formulas literally.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedMetricError, UsageError


def _validate_pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UsageError(f"scores {scores.shape} and labels {labels.shape} must be 1-d and equal")
    if not np.isin(labels, (0, 1)).all():
        raise UsageError("labels must be 0/1")
    if labels.min(initial=1) == labels.max(initial=0):
        raise UndefinedMetricError("metric undefined: labels contain a single class")
    return scores, labels.astype(np.int64)


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    values = np.asarray(values)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), via the rank-sum identity."""
    scores, labels = _validate_pair(scores, labels)
    m = int(labels.sum())
    n = len(labels) - m
    rank_sum = midranks(scores)[labels == 1].sum()
    return float((rank_sum - m * (m + 1) / 2.0) / (m * n))


def auprc(scores, labels) -> float:
    """Average precision: sum of (recall step) * precision over thresholds."""
    scores, labels = _validate_pair(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order]
    s = scores[order]
    total_pos = int(labels.sum())
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # evaluate only at the last index of each distinct score (threshold)
    last = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    ap = 0.0
    prev_recall = 0.0
    for i in last:
        recall = tp[i] / total_pos
        precision = tp[i] / (tp[i] + fp[i])
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def binary_f1(predicted, true) -> float:
    predicted = np.asarray(predicted).astype(np.int64)
    true = np.asarray(true).astype(np.int64)
    tp = int(((predicted == 1) & (true == 1)).sum())
    fp = int(((predicted == 1) & (true == 0)).sum())
    fn = int(((predicted == 0) & (true == 1)).sum())
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def macro_f1(predicted, true, num_classes: int) -> float:
    """Unweighted mean of one-vs-rest F1; absent classes contribute 0."""
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    scores = [
        binary_f1((predicted == k).astype(int), (true == k).astype(int))
        for k in range(num_classes)
    ]
    return float(np.mean(scores))


def spearman(x, y) -> float:
    """Rank correlation with midranks; needs at least 3 pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("spearman needs two equal-length 1-d arrays")
    if len(x) < 3:
        raise UndefinedMetricError("spearman undefined for fewer than 3 pairs")
    rx = midranks(x)
    ry = midranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise UndefinedMetricError("spearman undefined: constant ranks")
    return float((rx * ry).sum() / denom)
