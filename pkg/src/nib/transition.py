"""Probability transition matrix: per-class accumulated mean predictions.

Each class row is the running mean, over every contributing batch so far,
of the mean predicted distribution of that class's selected-clean samples.
Rows are normalized by their own contributing-batch count, so classes absent
from some batches still yield valid probability rows. The serving snapshot is
frozen once per epoch; a class never seen keeps an all-zero row, which callers
must treat as "no soft label yet".
"""

import csv
from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-6


@dataclass
class TransitionState:
    num_classes: int
    row_sums: np.ndarray = None
    counts: np.ndarray = None
    snapshot: np.ndarray = None
    epoch_index: int = 0
    log_rows: bool = False
    row_log: list = field(default_factory=list)  # (epoch, batch, class, row)

    def __post_init__(self):
        k = self.num_classes
        if self.row_sums is None:
            self.row_sums = np.zeros((k, k))
        if self.counts is None:
            self.counts = np.zeros(k, dtype=np.int64)
        if self.snapshot is None:
            self.snapshot = np.zeros((k, k))

    @property
    def seen(self):
        return self.counts > 0


def batch_class_row(class_predictions):
    """Mean predicted distribution of one class's clean samples in a batch.

    Rows are renormalized in float64 before averaging so accumulated rows sum
    to 1 at solver precision. Returns None when the class has no clean sample
    in the batch (no contribution).
    """
    preds = np.asarray(class_predictions, dtype=np.float64)
    if preds.size == 0:
        return None
    preds = preds / preds.sum(axis=1, keepdims=True)
    return preds.mean(axis=0)


def accumulate_batch(state, rows, batch_index=None):
    """Add one batch's per-class rows (entries may be None) into the state."""
    for k, row in enumerate(rows):
        if row is None:
            continue
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (state.num_classes,) or np.any(row < -ROW_TOL) \
                or abs(row.sum() - 1.0) > ROW_TOL:
            raise ValueError(f"class {k} row is not a probability vector")
        state.row_sums[k] += row
        state.counts[k] += 1
        if state.log_rows:
            state.row_log.append((state.epoch_index + 1, batch_index, k, row.copy()))
    return state


def snapshot_epoch(state):
    """Freeze the serving matrix at an epoch boundary.

    Row k becomes row_sums[k] / counts[k]; unseen classes keep a zero row.
    """
    snap = np.zeros((state.num_classes, state.num_classes))
    seen = state.counts > 0
    snap[seen] = state.row_sums[seen] / state.counts[seen, None]
    state.snapshot = snap
    state.epoch_index += 1
    return snap.copy()


def soft_label(snapshot, label):
    """Row `label` of the snapshot, or None while that class is unseen."""
    k = snapshot.shape[0]
    if not 0 <= label < k:
        raise ValueError(f"class {label} out of range for {k} classes")
    row = snapshot[label]
    if not np.any(row):
        return None
    return row.copy()


def soft_labels_for(snapshot, labels):
    """Dense (n, K) soft-label matrix plus a per-sample absent mask."""
    labels = np.asarray(labels, dtype=np.int64)
    dense = snapshot[labels]
    absent = ~np.any(dense, axis=1)
    return dense, absent


def snapshot_to_csv(snapshot, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in snapshot:
            writer.writerow([repr(float(v)) for v in row])
