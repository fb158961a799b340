"""Small-loss clean-sample selection: remember-rate schedule plus ranking.

The selection criterion is configurable: plain cross-entropy (the baseline),
the joint criterion mixing cross-entropy with the inter-class correlation
loss, or the correlation loss alone (ablation). Samples whose class has no
accumulated soft label yet are always scored by cross-entropy alone, which
makes the very first epoch identical to the baseline criterion.
"""

import math
from dataclasses import dataclass

import numpy as np

from .losses import batch_cross_entropy, batch_ic_loss
from .transition import soft_labels_for

MODES = ("cls_only", "overall", "ic_only")


@dataclass(frozen=True)
class SampleLosses:
    """Per-sample loss parts and the mode-specific ranking criterion."""

    cls: np.ndarray
    ic: np.ndarray
    overall: np.ndarray
    criterion: np.ndarray
    absent: np.ndarray
    mode: str
    weight: float


@dataclass(frozen=True)
class SelectionOutcome:
    kept: np.ndarray       # strictly increasing batch indices
    keep_count: int
    mode: str
    losses: SampleLosses = None


def remember_rate(epoch, tau, ramp_epochs):
    """Fraction of each batch kept as clean: decays 1 -> 1 - tau over
    ramp_epochs epochs, constant afterwards."""
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"noise rate tau must lie in [0, 1), got {tau}")
    if ramp_epochs < 1:
        raise ValueError(f"ramp_epochs must be >= 1, got {ramp_epochs}")
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return 1.0 - tau * min(epoch / ramp_epochs, 1.0)


def keep_count(rate, batch_len):
    """Per-batch clean-set size: ceil(rate * batch length)."""
    return int(math.ceil(rate * batch_len))


def criterion_losses(probs, labels, snapshot, weight, mode):
    """Score a batch under the chosen criterion.

    Loss parts (cls, ic, overall) are returned for logging regardless of
    mode. Samples with an absent soft label fall back to cross-entropy in
    every mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown selection mode {mode!r}, expected one of {MODES}")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    cls = batch_cross_entropy(probs, labels)
    if snapshot is None:
        dense = np.zeros_like(probs)
        absent = np.ones(labels.shape[0], dtype=bool)
    else:
        dense, absent = soft_labels_for(snapshot, labels)
    ic = np.where(absent, 0.0, batch_ic_loss(dense, probs))
    overall = np.where(absent, cls, weight * cls + (1.0 - weight) * ic)

    if mode == "cls_only":
        criterion = cls
    elif mode == "overall":
        criterion = overall
    else:
        criterion = np.where(absent, cls, ic)
    return SampleLosses(cls=cls, ic=ic, overall=overall, criterion=criterion,
                        absent=absent, mode=mode, weight=float(weight))


def select_clean(losses, d, mode=None):
    """Keep the d smallest-criterion samples, ties broken by batch index.

    `losses` is either a SampleLosses or a bare 1-d criterion array.
    """
    parts = losses if isinstance(losses, SampleLosses) else None
    criterion = parts.criterion if parts is not None else np.asarray(losses, dtype=np.float64)
    n = criterion.shape[0]
    if not 0 <= d <= n:
        raise ValueError(f"keep count {d} out of range for batch of {n}")
    if not np.all(np.isfinite(criterion)):
        raise ValueError("criterion losses must be finite")
    order = np.argsort(criterion, kind="stable")
    kept = np.sort(order[:d])
    return SelectionOutcome(kept=kept, keep_count=int(d),
                            mode=mode or (parts.mode if parts else "cls_only"),
                            losses=parts)
