"""Label-noise injection via row-stochastic flip matrices.

Supported structures: symmetric flipping (mass spread uniformly over the
other K-1 classes) and pair flipping (all mass onto the cyclic successor
class). Corruption is sampled from a dedicated, call-local random stream so
that a given (labels, matrix, seed) triple always yields the same record.
"""

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class NoiseMatrix:
    """K x K flip-probability table; entries[i, j] = Pr[observed=j | true=i]."""

    entries: np.ndarray
    kind: str
    rate: float

    @property
    def num_classes(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class CorruptionRecord:
    """Outcome of one corruption draw, with ground-truth flip flags."""

    observed_labels: np.ndarray
    flip_mask: np.ndarray
    realized_rate: float


def build_noise_matrix(kind, rate, num_classes):
    """Construct a NoiseMatrix of the given kind.

    kind: 'symmetric', 'pair' or 'identity'. Symmetric admits rate in [0, 1);
    pair admits rate in [0, 0.5] (keeps the diagonal dominant).
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    k = int(num_classes)
    if kind == "identity":
        if rate != 0.0:
            raise ValueError("identity noise matrix requires rate == 0")
        entries = np.eye(k)
    elif kind == "symmetric":
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"symmetric flip rate must be in [0, 1), got {rate}")
        entries = np.full((k, k), rate / (k - 1))
        np.fill_diagonal(entries, 1.0 - rate)
    elif kind == "pair":
        if not 0.0 <= rate <= 0.5:
            raise ValueError(f"pair flip rate must be in [0, 0.5], got {rate}")
        entries = np.eye(k) * (1.0 - rate)
        for i in range(k):
            entries[i, (i + 1) % k] += rate
    else:
        raise ValueError(f"unknown noise kind: {kind!r}")

    row_sums = entries.sum(axis=1)
    assert np.all(np.abs(row_sums - 1.0) < ROW_SUM_TOL)
    return NoiseMatrix(entries=entries, kind=kind, rate=float(rate))


def corrupt_labels(true_labels, matrix, seed):
    """Draw an observed label for each sample from its class row of `matrix`.

    Uses one dedicated random stream per call, so the result depends only on
    (true_labels, matrix, seed) and never on any training-side RNG.
    """
    labels = np.asarray(true_labels, dtype=np.int64)
    k = matrix.num_classes
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")

    rng = np.random.default_rng([int(seed), 0xD1CE])
    u = rng.random(labels.shape[0])
    cdf = np.cumsum(matrix.entries, axis=1)
    # observed class = number of cdf bins at or below the uniform draw
    observed = (cdf[labels] <= u[:, None]).sum(axis=1).astype(np.int64)
    observed = np.minimum(observed, k - 1)

    flip_mask = observed != labels
    realized = float(flip_mask.mean()) if labels.size else 0.0
    return CorruptionRecord(observed_labels=observed, flip_mask=flip_mask,
                            realized_rate=realized)
