"""Command-line experiment runner.

Subcommands:
  run      train once from a config file and write the run directory
  sweep    repeat a config over several seeds plus an aggregate summary
  compare  tabulate last-10 metrics across runs (Table-style analog)
  render   plot a metric's training curve for one or more runs as SVG
"""

import argparse
import csv
import statistics
import sys
from pathlib import Path

from .config import load_config, resolve
from .metrics import last_k_mean, read_metrics_csv
from .paradigms import run as run_training
from .runio import read_manifest, write_run_artifacts

METHOD_TAGS = {"off": "", "on": "+nib", "ic_only": "+ic_only"}


def _method_label(manifest):
    cfg = manifest["config"]
    return cfg["paradigm"] + METHOD_TAGS[cfg["nib.mode"]]


def _with_seed(overrides, seed):
    out = dict(overrides)
    if seed is not None:
        for key in ("seed.init", "seed.shuffle", "seed.noise"):
            out[key] = str(seed)
    return out


def _run_once(config_path, seed, out_dir, force):
    config = load_config(config_path)
    if seed is not None:
        config = resolve(_with_seed(config.echo(), seed))
    record = run_training(config)
    write_run_artifacts(record, out_dir, force=force)
    return record


def cmd_run(args):
    out = args.out
    if out is None:
        stem = Path(args.config).stem
        out = f"runs/{stem}" + (f"_seed{args.seed}" if args.seed is not None else "")
    record = _run_once(args.config, args.seed, out, args.force)
    finals = record.manifest["final_metrics"]
    print(f"run complete: {out}")
    for key in sorted(finals):
        print(f"  {key} = {finals[key]:.4f}")
    return 0


def _last10(run_dir, metric, net="A"):
    rows = [r for r in read_metrics_csv(Path(run_dir) / "metrics.csv")
            if r["net"] == net]
    values = [float(r[metric]) for r in rows]
    return last_k_mean(values, min(10, len(values)))


def cmd_sweep(args):
    seeds = [int(s) for s in args.seeds.split(",")]
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    out_root = Path(args.out or f"runs/{Path(args.config).stem}_sweep")
    run_dirs = []
    for seed in seeds:
        run_dir = out_root / f"seed_{seed}"
        _run_once(args.config, seed, run_dir, args.force)
        run_dirs.append(run_dir)
        print(f"seed {seed} done: {run_dir}")

    rows = []
    for seed, run_dir in zip(seeds, run_dirs):
        rows.append({"seed": seed,
                     "last10_test_acc": _last10(run_dir, "test_acc"),
                     "last10_test_acc_ensemble": _last10(run_dir, "test_acc_ensemble"),
                     "last10_label_precision": _last10(run_dir, "label_precision")})
    summary = out_root / "summary.csv"
    with open(summary, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
        if len(rows) > 1:
            means = {"seed": "mean"}
            for key in list(rows[0])[1:]:
                means[key] = statistics.mean(r[key] for r in rows)
            writer.writerow(means)
    print(f"sweep summary: {summary}")
    return 0


def cmd_compare(args):
    if len(args.runs) < 2:
        raise ValueError("compare needs at least 2 run directories")
    manifests = {}
    for run_dir in args.runs:
        if not (Path(run_dir) / "metrics.csv").exists():
            raise FileNotFoundError(f"run {run_dir} has no metrics.csv")
        manifests[run_dir] = read_manifest(run_dir)

    def identity(m):
        return (m["dataset_fingerprints"]["train"],
                m["dataset_fingerprints"]["test"],
                m["noise"]["kind"], m["noise"]["rate"])

    first = identity(next(iter(manifests.values())))
    for run_dir, m in manifests.items():
        if identity(m) != first:
            raise ValueError(f"run {run_dir} was made on different data/noise; "
                             "refusing to compare")

    groups = {}
    for run_dir, m in manifests.items():
        groups.setdefault(_method_label(m), []).append(run_dir)

    header = ["method", "seeds", "last10_test_acc", "last10_label_precision"]
    table = []
    for label in sorted(groups):
        accs = [_last10(d, "test_acc") for d in groups[label]]
        precs = [_last10(d, "label_precision") for d in groups[label]]
        table.append([label, str(len(accs)), _mean_std(accs), _mean_std(precs)])

    widths = [max(len(row[i]) for row in [header] + table) for i in range(len(header))]
    for row in [header] + table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(table)
        print(f"comparison written: {args.out}")
    return 0


def _mean_std(values):
    mean = statistics.mean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return f"{mean:.4f} +- {std:.4f}"


def cmd_render(args):
    from .plots import render_metric
    out = args.out or f"metric_{args.metric}.svg"
    render_metric(args.runs, args.metric, out, net=args.net)
    print(f"figure written: {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nib",
                                     description="noise-robust training runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train once from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override init/shuffle/noise seeds together")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--force", action="store_true",
                       help="overwrite an existing run directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config over several seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", required=True, help="comma-separated list")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--force", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="tabulate last-10 metrics across runs")
    p_cmp.add_argument("runs", nargs="+")
    p_cmp.add_argument("--out", default=None, help="also write the table as CSV")
    p_cmp.set_defaults(func=cmd_compare)

    p_render = sub.add_parser("render", help="plot a metric curve as SVG")
    p_render.add_argument("runs", nargs="+")
    p_render.add_argument("--metric", required=True)
    p_render.add_argument("--net", default="A", choices=["A", "B"])
    p_render.add_argument("--out", default=None)
    p_render.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line, machine-parsable failure surface
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
