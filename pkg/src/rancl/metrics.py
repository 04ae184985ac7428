"""Classification and reconstruction metrics."""

from __future__ import annotations

import numpy as np

from rancl.errors import StructuralError, UndefinedMetricError


def _upper_pairs(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {m.shape}")
    return m[np.triu_indices(m.shape[0], 1)] != 0


def f1_binary(pred, truth) -> tuple[float, float, float]:
    """Precision, recall and F1 of ``pred`` against ``truth``.

    Square matrices are compared over their strict upper triangle (unordered
    node pairs); anything else is treated as a set of hashable items. Both
    empty counts as perfect; no true positives otherwise scores 0.
    """
    if isinstance(pred, np.ndarray) or isinstance(truth, np.ndarray):
        p, t = np.asarray(pred), np.asarray(truth)
        if p.shape != t.shape:
            raise StructuralError(f"shape mismatch {p.shape} vs {t.shape}")
        p, t = _upper_pairs(p), _upper_pairs(t)
        tp = int(np.sum(p & t))
        fp = int(np.sum(p & ~t))
        fn = int(np.sum(~p & t))
    else:
        p, t = set(pred), set(truth)
        tp, fp, fn = len(p & t), len(p - t), len(t - p)
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    if tp == 0:
        return 0.0, 0.0, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return precision, recall, 2 * precision * recall / (precision + recall)


def accuracy(s_pk, y) -> float:
    """Fraction of cells where ``s_pk > 0`` agrees with the binary label."""
    s, y = np.asarray(s_pk), np.asarray(y)
    if s.shape != y.shape:
        raise StructuralError(f"shape mismatch {s.shape} vs {y.shape}")
    return float(np.mean((s > 0) == (y != 0)))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(pos > neg) + 0.5 P(tie) over all pos/neg pairs."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel() != 0
    if s.shape != y.shape:
        raise StructuralError(f"shape mismatch {s.shape} vs {y.shape}")
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


def epochs_to_target(series, target: float) -> int | None:
    """First (1-based) epoch whose value reaches ``target``; None if never."""
    values = list(series)
    if not values:
        raise ValueError("empty metric series")
    for epoch, value in enumerate(values, start=1):
        if value >= target:
            return epoch
    return None
