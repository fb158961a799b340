"""Run metrics: accuracy, selected-set label precision, last-k averaging,
and the hard-vs-mislabeled loss-separation report."""

import csv
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

from .losses import batch_cross_entropy, batch_ic_loss
from .transition import soft_labels_for

METRICS_COLUMNS = ["epoch", "net", "test_acc", "test_acc_ensemble",
                   "label_precision", "mean_cls", "mean_ic", "remember_rate",
                   "n_selected", "n_selected_flipped"]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    net: str
    test_acc: float
    test_acc_ensemble: float
    label_precision: float
    mean_cls: float
    mean_ic: float
    remember_rate: float
    n_selected: int
    n_selected_flipped: int

    def row(self):
        d = asdict(self)
        return [repr(d[c]) if isinstance(d[c], float) else str(d[c])
                for c in METRICS_COLUMNS]


def accuracy(predicted, true_labels):
    predicted = np.asarray(predicted)
    true_labels = np.asarray(true_labels)
    if predicted.shape != true_labels.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {true_labels.shape}")
    if predicted.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float((predicted == true_labels).mean())


def label_precision(kept_indices, flip_mask):
    """Fraction of kept samples whose observed label is uncorrupted."""
    kept = np.asarray(kept_indices, dtype=np.int64)
    if kept.size == 0:
        raise ValueError("label precision of an empty selection is undefined")
    return float((~np.asarray(flip_mask)[kept]).mean())


def last_k_mean(stream, k):
    values = np.asarray(stream, dtype=np.float64)
    if k < 1 or k > values.shape[0]:
        raise ValueError(f"k={k} out of range for stream of {values.shape[0]}")
    return float(values[-k:].mean())


def write_metrics_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def hard_vs_noisy_report(classifier, dataset, snapshot, weight):
    """Loss statistics for easy-clean, hard-clean and flipped train samples.

    Hard-clean is the lowest-margin decile of the clean samples, where margin
    is p[true class] minus the best other class probability. Reports mean and
    std of both loss parts per group, a rank-sum test of the correlation loss
    between flipped and hard-clean, and the pooled cross-entropy spread.
    """
    from .classifier import predict_proba

    probs = predict_proba(classifier, dataset.features)
    cls = batch_cross_entropy(probs, dataset.observed_labels)
    dense, absent = soft_labels_for(snapshot, dataset.observed_labels)
    ic = np.where(absent, np.nan, batch_ic_loss(dense, probs))

    clean = ~dataset.flip_mask
    true_p = probs[np.arange(dataset.n), dataset.true_labels]
    others = probs.copy()
    others[np.arange(dataset.n), dataset.true_labels] = -np.inf
    margin = true_p - others.max(axis=1)

    clean_idx = np.flatnonzero(clean)
    order = clean_idx[np.argsort(margin[clean_idx], kind="stable")]
    n_hard = int(np.ceil(0.1 * clean_idx.size))
    hard_idx = np.sort(order[:n_hard])
    easy_idx = np.sort(order[n_hard:])
    flipped_idx = np.flatnonzero(dataset.flip_mask)

    def group_stats(idx):
        sub_cls = cls[idx]
        sub_ic = ic[idx]
        defined = ~np.isnan(sub_ic)
        mix = weight * sub_cls[defined] + (1 - weight) * sub_ic[defined]
        return {
            "count": int(idx.size),
            "mean_cls": float(sub_cls.mean()) if idx.size else None,
            "std_cls": float(sub_cls.std(ddof=1)) if idx.size > 1 else None,
            "mean_ic": float(sub_ic[defined].mean()) if defined.any() else None,
            "std_ic": float(sub_ic[defined].std(ddof=1)) if defined.sum() > 1 else None,
            "mean_overall": float(mix.mean()) if defined.any() else None,
        }

    report = {
        "weight": float(weight),
        "flipped_group_empty": bool(flipped_idx.size == 0),
        "groups": {
            "easy_clean": group_stats(easy_idx),
            "hard_clean": group_stats(hard_idx),
            "flipped": group_stats(flipped_idx),
        },
    }

    if flipped_idx.size and hard_idx.size:
        a = ic[flipped_idx]
        b = ic[hard_idx]
        a, b = a[~np.isnan(a)], b[~np.isnan(b)]
        if a.size and b.size:
            stat, pvalue = stats.ranksums(a, b, alternative="greater")
            report["ic_ranksum"] = {"statistic": float(stat), "pvalue": float(pvalue)}
        ca, cb = cls[flipped_idx], cls[hard_idx]
        pooled = np.sqrt(((ca.size - 1) * ca.var(ddof=1) + (cb.size - 1) * cb.var(ddof=1))
                         / (ca.size + cb.size - 2))
        report["cls_gap"] = {
            "abs_mean_diff": float(abs(ca.mean() - cb.mean())),
            "pooled_std": float(pooled),
        }
    return report
