"""Training-curve rendering: one polyline per run, written as SVG.

Output is byte-stable for identical inputs: the SVG hash salt is pinned and
no timestamp metadata is embedded.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "nib"

import matplotlib.pyplot as plt

from .metrics import METRICS_COLUMNS, read_metrics_csv


def metric_series(run_dir, metric, net="A"):
    """(epochs, values) for one metric of one run, filtered to one network."""
    path = Path(run_dir) / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"run {run_dir} has no metrics.csv")
    rows = read_metrics_csv(path)
    if metric not in rows[0]:
        available = [c for c in METRICS_COLUMNS if c not in ("epoch", "net")]
        raise ValueError(f"unknown metric {metric!r}; available: "
                         + ", ".join(available))
    rows = [r for r in rows if r["net"] == net]
    epochs = [int(r["epoch"]) for r in rows]
    values = [float(r[metric]) for r in rows]
    return epochs, values


def render_metric(run_dirs, metric, out_path, net="A"):
    """Line chart of `metric` vs epoch for each run; returns the output path."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    all_values = []
    for run_dir in run_dirs:
        epochs, values = metric_series(run_dir, metric, net=net)
        ax.plot(epochs, values, marker="o" if len(epochs) == 1 else None,
                label=Path(run_dir).name)
        all_values.extend(values)
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric)
    if all_values and min(all_values) >= 0.0 and max(all_values) <= 1.0:
        ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(out_path)
