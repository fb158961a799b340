"""Classifiers: a configurable MLP and a small 6-conv CNN, both ending in a
softmax so every forward pass yields probability vectors.

Parameters are initialized from a dedicated numpy stream (fan-in-scaled
normals, zero biases), so a (spec, seed) pair fully determines the network
without touching torch's global RNG. Training uses Adam with the standard
moment coefficients.
"""

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .losses import PROB_FLOOR

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ArchSpec:
    """Architecture description; serialized into run manifests."""

    kind: str                    # 'mlp' or 'smallcnn'
    hidden: tuple = (32, 32)     # mlp hidden widths
    conv_widths: tuple = (32, 32, 64, 64, 128, 128)
    fc_width: int = 128          # cnn head width

    def describe(self):
        init = "fan-in-scaled normal (relu gain), output head 0.1x, zero bias"
        if self.kind == "mlp":
            return {"kind": "mlp", "hidden": list(self.hidden), "init": init}
        return {"kind": "smallcnn", "conv_widths": list(self.conv_widths),
                "fc_width": self.fc_width, "kernel": 3,
                "stride2_every": 2, "init": init}


@dataclass
class Classifier:
    net: nn.Module
    spec: ArchSpec
    num_classes: int
    input_shape: tuple
    dtype: torch.dtype

    @property
    def param_count(self):
        return sum(p.numel() for p in self.net.parameters())

    def parameters(self):
        return list(self.net.parameters())


def _build_mlp(spec, num_classes, input_dim):
    widths = [input_dim, *spec.hidden]
    layers = []
    for a, b in zip(widths[:-1], widths[1:]):
        layers += [nn.Linear(a, b), nn.ReLU()]
    layers += [nn.Linear(widths[-1], num_classes), nn.Softmax(dim=1)]
    return nn.Sequential(*layers)


def _build_smallcnn(spec, num_classes, input_shape):
    h, w, c = input_shape
    widths = list(spec.conv_widths)
    if len(widths) != 6:
        raise ValueError(f"smallcnn takes exactly 6 conv widths, got {len(widths)}")
    layers = []
    in_ch = c
    for i, out_ch in enumerate(widths):
        stride = 2 if i % 2 == 1 else 1
        layers += [nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1), nn.ReLU()]
        in_ch = out_ch
    conv = nn.Sequential(*layers)
    with torch.no_grad():
        flat = conv(torch.zeros(1, c, h, w)).numel()
    head = [nn.Flatten(), nn.Linear(flat, spec.fc_width), nn.ReLU(),
            nn.Linear(spec.fc_width, num_classes), nn.Softmax(dim=1)]
    return nn.Sequential(conv, *head)


def init_classifier(spec, num_classes, input_shape, seed, dtype=torch.float32):
    """Build a classifier with fan-in-scaled normal weights drawn from `seed`.

    Hidden layers use std sqrt(2 / fan_in) (ReLU gain); the output layer uses
    0.1 * sqrt(1 / fan_in) so fresh networks predict near-uniformly; all
    biases start at zero.
    """
    input_shape = tuple(int(v) for v in input_shape)
    if spec.kind == "mlp":
        if len(input_shape) != 1:
            raise ValueError(f"mlp expects flat features, got shape {input_shape}")
        if any(wd < 1 for wd in spec.hidden):
            raise ValueError(f"layer widths must be positive, got {spec.hidden}")
        net = _build_mlp(spec, num_classes, input_shape[0])
    elif spec.kind == "smallcnn":
        if len(input_shape) != 3:
            raise ValueError(f"smallcnn expects H x W x C features, got {input_shape}")
        if any(wd < 1 for wd in spec.conv_widths) or spec.fc_width < 1:
            raise ValueError("layer widths must be positive")
        net = _build_smallcnn(spec, num_classes, input_shape)
    else:
        raise ValueError(f"unknown architecture kind {spec.kind!r}")

    rng = np.random.default_rng([int(seed), 0x1417])
    weighted = [m for m in net.modules() if isinstance(m, (nn.Linear, nn.Conv2d))]
    with torch.no_grad():
        for m in weighted:
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            else:
                fan_in = m.in_features
            std = 0.1 * np.sqrt(1.0 / fan_in) if m is weighted[-1] \
                else np.sqrt(2.0 / fan_in)
            m.weight.copy_(torch.from_numpy(
                rng.standard_normal(tuple(m.weight.shape)) * std))
            m.bias.zero_()
    net = net.to(dtype)
    return Classifier(net=net, spec=spec, num_classes=num_classes,
                      input_shape=input_shape, dtype=dtype)


def as_input_tensor(classifier, features):
    """numpy features (flat or H x W x C) -> torch batch in the net's layout."""
    x = torch.as_tensor(np.ascontiguousarray(features), dtype=classifier.dtype)
    if x.ndim == len(classifier.input_shape):
        x = x.unsqueeze(0)
    if tuple(x.shape[1:]) != classifier.input_shape:
        raise ValueError(f"feature shape {tuple(x.shape[1:])} does not match "
                         f"classifier input {classifier.input_shape}")
    if x.ndim == 4:
        x = x.permute(0, 3, 1, 2)
    return x


def predict_proba(classifier, features, batch_size=512):
    """Class probabilities for a feature batch, evaluated without gradients."""
    out = []
    with torch.no_grad():
        x = as_input_tensor(classifier, features)
        for i in range(0, x.shape[0], batch_size):
            out.append(classifier.net(x[i:i + batch_size]).double().numpy())
    return np.concatenate(out)


class LossParts(NamedTuple):
    cls: torch.Tensor
    ic: torch.Tensor
    overall: torch.Tensor


def sample_losses_torch(probs, labels_t, soft_t, absent_t, weight):
    """Differentiable per-sample loss parts from already-computed probabilities.

    Soft labels are constants: no gradient flows into them. Samples flagged
    absent contribute a pure cross-entropy overall term.
    """
    p = probs.clamp(min=PROB_FLOOR)
    idx = torch.arange(p.shape[0])
    cls = -torch.log(p[idx, labels_t])
    ic = (torch.xlogy(soft_t, soft_t) - soft_t * torch.log(p)).sum(dim=1)
    ic = torch.where(absent_t, torch.zeros_like(ic), ic)
    overall = torch.where(absent_t, cls, weight * cls + (1.0 - weight) * ic)
    return LossParts(cls=cls, ic=ic, overall=overall)


def _dense_soft(soft_labels, n, k, dtype):
    """Per-sample soft labels (vector or None) -> dense tensor + absent mask."""
    dense = np.zeros((n, k))
    absent = np.zeros(n, dtype=bool)
    for i, row in enumerate(soft_labels):
        if row is None:
            absent[i] = True
        else:
            dense[i] = row
    return (torch.as_tensor(dense, dtype=dtype),
            torch.as_tensor(absent))


def grad_overall(classifier, features, labels, soft_labels, weight):
    """Gradient of the batch-mean mixed loss w.r.t. every parameter.

    `soft_labels` is a per-sample sequence of probability vectors or None
    (None drops the correlation term for that sample). Returns the gradient
    list plus per-sample cls and ic parts for logging.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {weight}")
    x = as_input_tensor(classifier, features)
    y = torch.as_tensor(np.asarray(labels, dtype=np.int64))
    soft_t, absent_t = _dense_soft(soft_labels, x.shape[0],
                                   classifier.num_classes, classifier.dtype)
    for p in classifier.net.parameters():
        p.grad = None
    probs = classifier.net(x)
    cls, ic, overall = sample_losses_torch(probs, y, soft_t, absent_t, weight)
    overall.mean().backward()
    grads = [p.grad.detach().double().numpy().copy()
             for p in classifier.net.parameters()]
    return grads, cls.detach().double().numpy(), ic.detach().double().numpy()


@dataclass
class OptimizerState:
    """Adam state for one classifier: per-parameter moments plus step count."""

    optimizer: torch.optim.Adam
    learning_rate: float
    momentum: float = ADAM_BETAS[0]

    @property
    def step_count(self):
        steps = [int(s["step"]) for s in self.optimizer.state.values() if "step" in s]
        return max(steps) if steps else 0

    def moments(self, classifier):
        """(first, second) moment arrays per parameter, zeros before any step."""
        first, second = [], []
        for p in classifier.net.parameters():
            state = self.optimizer.state.get(p, {})
            if "exp_avg" in state:
                first.append(state["exp_avg"].double().numpy().copy())
                second.append(state["exp_avg_sq"].double().numpy().copy())
            else:
                first.append(np.zeros(tuple(p.shape)))
                second.append(np.zeros(tuple(p.shape)))
        return first, second


def make_optimizer(classifier, learning_rate=0.001):
    opt = torch.optim.Adam(classifier.net.parameters(), lr=learning_rate,
                           betas=ADAM_BETAS, eps=ADAM_EPS)
    return OptimizerState(optimizer=opt, learning_rate=learning_rate)


def apply_update(classifier, state, gradients):
    """One Adam step from an explicit gradient list (shape-checked)."""
    params = classifier.parameters()
    if len(gradients) != len(params):
        raise ValueError(f"got {len(gradients)} gradients for {len(params)} parameters")
    for p, g in zip(params, gradients):
        g = torch.as_tensor(np.asarray(g), dtype=classifier.dtype)
        if tuple(g.shape) != tuple(p.shape):
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter "
                             f"shape {tuple(p.shape)}")
        p.grad = g
    state.optimizer.step()
    return classifier, state


CHECKPOINT_MAGIC = b"NIBW"


def save_checkpoint(classifier, path):
    """Parameter dump: magic, tensor count, per-tensor shape header, then all
    values as little-endian float64."""
    params = [p.detach().double().numpy() for p in classifier.net.parameters()]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<q", len(params)))
        for arr in params:
            fh.write(struct.pack("<q", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
        for arr in params:
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        (count,) = struct.unpack("<q", fh.read(8))
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<q", fh.read(8))
            shapes.append(struct.unpack(f"<{ndim}q", fh.read(8 * ndim)))
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape)) if shape else 1
            flat = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            arrays.append(flat.reshape(shape))
    return arrays


def load_parameters(classifier, arrays):
    params = classifier.parameters()
    if len(arrays) != len(params):
        raise ValueError(f"checkpoint has {len(arrays)} tensors, "
                         f"classifier has {len(params)}")
    with torch.no_grad():
        for p, arr in zip(params, arrays):
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError("checkpoint tensor shape mismatch")
            p.copy_(torch.as_tensor(arr, dtype=classifier.dtype))
    return classifier
