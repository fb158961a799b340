"""Run-directory artifacts: manifest.json, metrics.csv, per-epoch transition
snapshots, and the hard-vs-noisy loss report."""

import json
from pathlib import Path

from .metrics import hard_vs_noisy_report, write_metrics_csv
from .transition import snapshot_to_csv

MANIFEST_NAME = "manifest.json"
METRICS_NAME = "metrics.csv"
REPORT_NAME = "hard_vs_noisy.json"


def write_run_artifacts(record, out_dir, force=False):
    """Write all artifacts for a finished run into `out_dir`.

    Refuses to overwrite an existing run unless `force` is set. If a write
    fails midway, a manifest flagged partial is left behind before the error
    propagates.
    """
    out = Path(out_dir)
    manifest_path = out / MANIFEST_NAME
    if manifest_path.exists() and not force:
        raise FileExistsError(f"{manifest_path} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)

    manifest = dict(record.manifest)
    manifest["partial"] = False
    try:
        write_metrics_csv(record.records, out / METRICS_NAME)
        for epoch, snaps in record.snapshots:
            for net, snap in snaps.items():
                snapshot_to_csv(snap, out / f"transition_epoch_{epoch:03d}_{net}.csv")
        report = hard_vs_noisy_report(record.classifiers["A"], record.train,
                                      record.transitions["A"].snapshot,
                                      record.config["loss.lambda"])
        with open(out / REPORT_NAME, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    except Exception:
        manifest["partial"] = True
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        raise
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def read_manifest(run_dir):
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"run {run_dir} has no {MANIFEST_NAME}")
    with open(path) as fh:
        return json.load(fh)
