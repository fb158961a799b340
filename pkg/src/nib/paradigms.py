"""Dual-network robust training loops: co-teaching and JoCoR.

Both paradigms rank batch samples by a small-loss criterion, keep the
remember-rate fraction as 'clean', and run either with the transition-matrix
plugin off (plain criterion), on (joint criterion for selection and
optimization), or with the correlation loss alone driving selection.

Per batch the order is: forward both nets, select clean sets from the
previous epoch's snapshots, fold the clean predictions into the running
transition sums, then take the optimizer step. Serving snapshots refresh only
at epoch boundaries, so soft labels used during epoch n depend on data up to
epoch n-1 only.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import selection as sel
from .classifier import (ArchSpec, as_input_tensor, init_classifier,
                         make_optimizer, predict_proba, sample_losses_torch)
from .datasets import (generate_blobs, load_cifar10, make_batch_plan,
                       standardize, subset_per_class)
from .losses import PROB_FLOOR
from .metrics import EpochRecord, accuracy, label_precision, last_k_mean
from .noise import build_noise_matrix, corrupt_labels
from .transition import (TransitionState, accumulate_batch, batch_class_row,
                         snapshot_epoch)

NETS = ("A", "B")


@dataclass
class TrainerState:
    """Mutable state of one dual-network run: paired classifiers with their
    optimizers and transition accumulators, plus the epoch counter."""

    classifiers: dict
    optimizers: dict
    transitions: dict
    epoch_index: int = 0


@dataclass
class RunRecord:
    """Everything a finished run produced, in memory."""

    config: object
    records: list
    manifest: dict
    classifiers: dict
    transitions: dict
    train: object
    test: object
    epoch_kept: dict            # net -> list per epoch of global kept indices
    snapshots: list             # (epoch, {net: K x K matrix}) at dump cadence
    selection_log: list = field(default_factory=list)
    duration_s: float = 0.0


def build_datasets(config):
    """Materialize (train, test) per the config: generate or ingest, subset,
    corrupt the train labels, and standardize with train-split constants."""
    kind = config["dataset.kind"]
    if kind == "blobs":
        train, test = generate_blobs(config["dataset.classes"],
                                     config["dataset.per_class"],
                                     config["dataset.dim"],
                                     config["dataset.center_spread"],
                                     config["dataset.cluster_std"],
                                     config["dataset.seed"])
    else:
        root = config.data_root
        if not root:
            raise ValueError("dataset.root not set and NIB_DATA_ROOT is empty")
        train, test = load_cifar10(root)
        if config["dataset.per_class"] > 0:
            train = subset_per_class(train, config["dataset.per_class"],
                                     config["dataset.seed"])

    fingerprints = {"train": train.fingerprint(), "test": test.fingerprint()}

    noise_info = {"kind": config["noise.kind"], "rate": config["noise.rate"],
                  "seed": config["seed.noise"], "realized_rate": 0.0}
    if config["noise.kind"] != "none":
        matrix = build_noise_matrix(config["noise.kind"], config["noise.rate"],
                                    train.num_classes)
        record = corrupt_labels(train.true_labels, matrix, config["seed.noise"])
        train = train.with_corruption(record)
        noise_info["realized_rate"] = record.realized_rate

    train, test, mean, std = standardize(train, test)
    norm = {"mean": np.asarray(mean).ravel().tolist(),
            "std": np.asarray(std).ravel().tolist()}
    return train, test, fingerprints, noise_info, norm


def _arch_for(config):
    widths = config.widths()
    if config["model.kind"] == "mlp":
        return ArchSpec(kind="mlp", hidden=widths)
    return ArchSpec(kind="smallcnn", conv_widths=widths,
                    fc_width=config["model.fc_width"])


def _kl(p, q):
    """Row-wise KL(p || q) with both sides differentiable, logs clamped."""
    return (torch.xlogy(p, p) - p * torch.log(q.clamp(min=PROB_FLOOR))).sum(dim=1)


def jocor_joint_loss(cls_a, cls_b, probs_a, probs_b, co_weight):
    """Per-sample joint loss: weighted sum of both cross-entropies plus the
    symmetric KL co-regularizer between the two networks' predictions."""
    return (1.0 - co_weight) * (cls_a + cls_b) \
        + co_weight * (_kl(probs_a, probs_b) + _kl(probs_b, probs_a))


def _class_rows(probs, labels, kept, num_classes):
    rows = []
    for k in range(num_classes):
        members = kept[labels[kept] == k]
        rows.append(batch_class_row(probs[members]) if members.size else None)
    return rows


def run_coteaching(config):
    if config["paradigm"] != "coteaching":
        raise ValueError(f"paradigm is {config['paradigm']!r}, expected coteaching")
    return _train_dual(config)


def run_jocor(config):
    if config["paradigm"] != "jocor":
        raise ValueError(f"paradigm is {config['paradigm']!r}, expected jocor")
    return _train_dual(config)


def run(config):
    return _train_dual(config)


def _train_dual(config):
    started = time.perf_counter()
    paradigm = config["paradigm"]
    train, test, fingerprints, noise_info, norm = build_datasets(config)
    k = train.num_classes

    arch = _arch_for(config)
    init_seeds = {"A": 2 * config["seed.init"], "B": 2 * config["seed.init"] + 1}
    log_rows = bool(config["log.transition_rows"])
    state = TrainerState(
        classifiers={net: init_classifier(arch, k, train.features.shape[1:],
                                          init_seeds[net]) for net in NETS},
        optimizers={},
        transitions={net: TransitionState(num_classes=k, log_rows=log_rows)
                     for net in NETS})
    state.optimizers = {net: make_optimizer(state.classifiers[net],
                                            config["train.lr"]) for net in NETS}
    clf, opt, trans = state.classifiers, state.optimizers, state.transitions

    weight = config["loss.lambda"]
    co_weight = config["jocor.lambda"]
    mode = config.selection_mode
    nib_on = config["nib.mode"] != "off"
    tau = config.tau
    ramp = config["selection.ramp_epochs"]
    batch_size = config["train.batch_size"]
    epochs = config["train.epochs"]
    log_sel = bool(config["log.selection_indices"])
    dump_every = config["log.transition_every"]

    records, snapshots, selection_log = [], [], []
    epoch_kept = {net: [] for net in NETS}
    partial_coverage_epochs = {net: [] for net in NETS}
    total_batches = 0

    for epoch in range(1, epochs + 1):
        rate = sel.remember_rate(epoch - 1, tau, ramp)
        plan = make_batch_plan(train.n, batch_size, config["seed.shuffle"], epoch)

        snap_t, class_absent_t = {}, {}
        for net in NETS:
            snap_t[net] = torch.as_tensor(trans[net].snapshot, dtype=clf[net].dtype)
            class_absent_t[net] = torch.as_tensor(~trans[net].seen)

        kept_epoch = {net: [] for net in NETS}
        sum_cls = {net: 0.0 for net in NETS}
        sum_ic = {net: 0.0 for net in NETS}

        for j, idx in enumerate(plan.batches()):
            x = as_input_tensor(clf["A"], train.features[idx])
            y_np = train.observed_labels[idx]
            y = torch.as_tensor(y_np)
            d = sel.keep_count(rate, idx.size)

            probs, parts, probs_np = {}, {}, {}
            for net in NETS:
                for p in clf[net].net.parameters():
                    p.grad = None
                pr = clf[net].net(x)
                soft = snap_t[net][y]
                absent = class_absent_t[net][y]
                parts[net] = sample_losses_torch(pr, y, soft, absent, weight)
                probs[net] = pr
                probs_np[net] = pr.detach().double().numpy()

            if paradigm == "coteaching":
                kept = {}
                for net in NETS:
                    scored = sel.criterion_losses(probs_np[net], y_np,
                                                  trans[net].snapshot, weight, mode)
                    kept[net] = sel.select_clean(scored, d).kept
                    if log_sel:
                        selection_log.append({"epoch": epoch, "batch": j, "net": net,
                                              "indices": idx.copy(),
                                              "kept": idx[kept[net]].copy(),
                                              "criterion": scored.criterion.copy(),
                                              "probs": probs_np[net].copy()})
                peer = {"A": "B", "B": "A"}
                losses = {}
                for net in NETS:
                    source = parts[net].overall if nib_on else parts[net].cls
                    losses[net] = source[torch.as_tensor(kept[peer[net]])].mean()
                for net in NETS:
                    losses[net].backward()
                for net in NETS:
                    opt[net].optimizer.step()
            else:
                joint = jocor_joint_loss(parts["A"].cls, parts["B"].cls,
                                         probs["A"], probs["B"], co_weight)
                ic_pair = 0.5 * (parts["A"].ic + parts["B"].ic)
                absent = class_absent_t["A"][y] | class_absent_t["B"][y]
                mixed = torch.where(absent, joint,
                                    weight * joint + (1.0 - weight) * ic_pair)
                if mode == "cls_only":
                    criterion_t = joint
                elif mode == "overall":
                    criterion_t = mixed
                else:
                    criterion_t = torch.where(absent, joint, ic_pair)
                crit_np = criterion_t.detach().double().numpy()
                shared = sel.select_clean(crit_np, d).kept
                kept = {net: shared for net in NETS}
                if log_sel:
                    for net in NETS:
                        selection_log.append({"epoch": epoch, "batch": j, "net": net,
                                              "indices": idx.copy(),
                                              "kept": idx[shared].copy(),
                                              "criterion": crit_np.copy(),
                                              "probs": probs_np[net].copy()})
                train_loss = mixed if nib_on else joint
                train_loss[torch.as_tensor(shared)].mean().backward()
                for net in NETS:
                    opt[net].optimizer.step()

            for net in NETS:
                rows = _class_rows(probs_np[net], y_np, kept[net], k)
                accumulate_batch(trans[net], rows, batch_index=j)
                kept_epoch[net].append(idx[kept[net]])
                sum_cls[net] += float(parts[net].cls.detach().double()
                                      .numpy()[kept[net]].sum())
                sum_ic[net] += float(parts[net].ic.detach().double()
                                     .numpy()[kept[net]].sum())

        total_batches += plan.n_iterations
        snaps = {net: snapshot_epoch(trans[net]) for net in NETS}
        state.epoch_index = epoch
        for net in NETS:
            if np.any(trans[net].counts < total_batches):
                partial_coverage_epochs[net].append(epoch)
        if dump_every and (epoch % dump_every == 0 or epoch == epochs):
            snapshots.append((epoch, snaps))

        test_probs = {net: predict_proba(clf[net], test.features) for net in NETS}
        acc = {net: accuracy(test_probs[net].argmax(axis=1), test.true_labels)
               for net in NETS}
        acc_ens = accuracy((0.5 * (test_probs["A"] + test_probs["B"])).argmax(axis=1),
                           test.true_labels)

        for net in NETS:
            kept_all = np.concatenate(kept_epoch[net])
            epoch_kept[net].append(kept_all)
            n_kept = kept_all.size
            records.append(EpochRecord(
                epoch=epoch, net=net, test_acc=acc[net], test_acc_ensemble=acc_ens,
                label_precision=label_precision(kept_all, train.flip_mask),
                mean_cls=sum_cls[net] / n_kept, mean_ic=sum_ic[net] / n_kept,
                remember_rate=rate, n_selected=int(n_kept),
                n_selected_flipped=int(train.flip_mask[kept_all].sum())))

    manifest = _build_manifest(config, fingerprints, noise_info, norm, arch,
                               init_seeds, records, partial_coverage_epochs,
                               time.perf_counter() - started)
    return RunRecord(config=config, records=records, manifest=manifest,
                     classifiers=clf, transitions=trans, train=train, test=test,
                     epoch_kept=epoch_kept, snapshots=snapshots,
                     selection_log=selection_log,
                     duration_s=manifest["duration_seconds"])


def _build_manifest(config, fingerprints, noise_info, norm, arch, init_seeds,
                    records, partial_coverage_epochs, duration):
    by_net = {net: [r for r in records if r.net == net] for net in NETS}
    k_last = min(10, len(by_net["A"]))
    finals = {}
    for net in NETS:
        finals[f"last{k_last}_test_acc_{net}"] = last_k_mean(
            [r.test_acc for r in by_net[net]], k_last)
        finals[f"last{k_last}_label_precision_{net}"] = last_k_mean(
            [r.label_precision for r in by_net[net]], k_last)
    finals[f"last{k_last}_test_acc_ensemble"] = last_k_mean(
        [r.test_acc_ensemble for r in by_net["A"]], k_last)

    return {
        "config": config.echo(),
        "seeds": {"init": config["seed.init"], "shuffle": config["seed.shuffle"],
                  "noise": config["seed.noise"], "net_init": init_seeds},
        "dataset_fingerprints": fingerprints,
        "noise": noise_info,
        "standardization": norm,
        "architecture": arch.describe(),
        "schedule": {"formula": "R(T) = 1 - tau*min(T/ramp_epochs, 1), T = epoch-1",
                     "tau": config.tau,
                     "ramp_epochs": config["selection.ramp_epochs"]},
        "selection_mode": config.selection_mode,
        "jocor_loss": ("(1-w)*(ce_A+ce_B) + w*(KL(pA||pB)+KL(pB||pA)), "
                       f"w={config['jocor.lambda']}")
                      if config["paradigm"] == "jocor" else None,
        "transition_partial_coverage_epochs": partial_coverage_epochs,
        "final_metrics": finals,
        "duration_seconds": duration,
    }
