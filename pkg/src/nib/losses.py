"""Per-sample losses: cross-entropy, inter-class correlation (KL), joint mix.

The inter-class correlation loss is KL(soft_label || prediction), soft label
first. Probabilities are clamped to [PROB_FLOOR, 1] inside every log so all
losses stay finite; vanishing soft-label entries contribute 0 (0 log 0 := 0).
"""

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-8


@dataclass(frozen=True)
class LossBreakdown:
    cls: float
    ic: float
    overall: float
    weight: float


def cross_entropy(p, label):
    """-log p[label], clamped. `p` is one probability vector."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= label < p.shape[0]:
        raise ValueError(f"label {label} out of range for {p.shape[0]} classes")
    return float(-np.log(max(p[label], PROB_FLOOR)))


def ic_loss(soft_label, p):
    """KL divergence of the prediction from the soft label, soft label first.

    sum_k s_k * log(s_k / p_k) with 0 log 0 := 0 and p clamped from below.
    """
    s = np.asarray(soft_label, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if s.shape != p.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {p.shape}")
    terms = np.where(s > 0, s * (np.log(np.maximum(s, PROB_FLOOR))
                                 - np.log(np.maximum(p, PROB_FLOOR))), 0.0)
    return float(max(terms.sum(), 0.0))


def overall_loss(cls, ic, weight):
    """Mix the two parts: weight * cls + (1 - weight) * ic."""
    if cls < 0 or ic < 0:
        raise ValueError(f"loss parts must be nonnegative, got cls={cls} ic={ic}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {weight}")
    return LossBreakdown(cls=float(cls), ic=float(ic),
                         overall=float(weight * cls + (1.0 - weight) * ic),
                         weight=float(weight))


def batch_cross_entropy(probs, labels):
    """Vectorized cross_entropy over rows of `probs`."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError("label out of range")
    picked = probs[np.arange(probs.shape[0]), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def batch_ic_loss(soft_labels, probs):
    """Vectorized ic_loss over paired rows."""
    s = np.asarray(soft_labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if s.shape != p.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {p.shape}")
    terms = np.where(s > 0, s * (np.log(np.maximum(s, PROB_FLOOR))
                                 - np.log(np.maximum(p, PROB_FLOOR))), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)
