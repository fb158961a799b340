"""Run configuration: flat dotted-key text files with typed defaults.

Every key has a default; a config file only lists overrides, one `key=value`
per line (# starts a comment). The resolved mapping is echoed verbatim into
the run manifest, so a run can be reproduced from its manifest alone.
"""

import os
from dataclasses import dataclass, field

DATA_ROOT_ENV = "NIB_DATA_ROOT"

# key -> (default, parser)
DEFAULTS = {
    "dataset.kind": ("blobs", str),          # blobs | cifar10
    "dataset.root": ("", str),               # cifar10 binary dir; env fallback
    "dataset.per_class": (500, int),         # blobs: generated per class; cifar10: subset size (0 = all)
    "dataset.seed": (7, int),                # blob generation / subset draw
    "dataset.classes": (4, int),             # blobs only
    "dataset.dim": (2, int),                 # blobs only
    "dataset.center_spread": (2.5, float),   # blobs only
    "dataset.cluster_std": (1.0, float),     # blobs only
    "noise.kind": ("none", str),             # none | symmetric | pair
    "noise.rate": (0.0, float),
    "model.kind": ("mlp", str),              # mlp | smallcnn
    "model.widths": ("auto", str),           # mlp hidden widths / cnn conv widths
    "model.fc_width": (128, int),            # cnn head width
    "paradigm": ("coteaching", str),         # coteaching | jocor
    "nib.mode": ("on", str),                 # off | on | ic_only
    "loss.lambda": (0.6, float),             # cls weight in the joint criterion
    "jocor.lambda": (0.85, float),           # co-regularization weight
    "train.epochs": (60, int),
    "train.batch_size": (128, int),
    "train.lr": (0.001, float),
    "selection.mode": ("auto", str),         # auto | cls_only | overall | ic_only
    "selection.ramp_epochs": (10, int),
    "selection.tau": (-1.0, float),          # -1 = use noise.rate
    "seed.init": (1, int),
    "seed.shuffle": (1, int),
    "seed.noise": (1, int),
    "log.transition_every": (1, int),        # 0 disables snapshot dumps
    "log.selection_indices": (0, int),       # keep per-batch kept indices in memory
    "log.transition_rows": (0, int),         # keep every accumulated class row
}

CHOICES = {
    "dataset.kind": {"blobs", "cifar10"},
    "noise.kind": {"none", "symmetric", "pair"},
    "model.kind": {"mlp", "smallcnn"},
    "paradigm": {"coteaching", "jocor"},
    "nib.mode": {"off", "on", "ic_only"},
    "selection.mode": {"auto", "cls_only", "overall", "ic_only"},
}

NIB_TO_SELECTION = {"off": "cls_only", "on": "overall", "ic_only": "ic_only"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def selection_mode(self):
        mode = self.values["selection.mode"]
        return NIB_TO_SELECTION[self.values["nib.mode"]] if mode == "auto" else mode

    @property
    def tau(self):
        t = self.values["selection.tau"]
        return self.values["noise.rate"] if t < 0 else t

    @property
    def data_root(self):
        return self.values["dataset.root"] or os.environ.get(DATA_ROOT_ENV, "")

    def widths(self):
        raw = str(self.values["model.widths"])
        if raw == "auto":
            return ((32, 32) if self.values["model.kind"] == "mlp"
                    else (32, 32, 64, 64, 128, 128))
        return tuple(int(w) for w in raw.split(","))

    def echo(self):
        """Flat string mapping sufficient to reconstruct this config."""
        return {k: _fmt(self.values[k]) for k in sorted(self.values)}


def _fmt(value):
    return repr(value) if isinstance(value, float) else str(value)


def _validate(values):
    for key, allowed in CHOICES.items():
        if values[key] not in allowed:
            raise ValueError(f"{key}={values[key]!r} not in {sorted(allowed)}")
    if not 0.0 <= values["loss.lambda"] <= 1.0:
        raise ValueError("loss.lambda must lie in [0, 1]")
    if not 0.0 <= values["jocor.lambda"] <= 1.0:
        raise ValueError("jocor.lambda must lie in [0, 1]")
    if values["train.epochs"] < 1:
        raise ValueError("train.epochs must be >= 1")
    if values["noise.kind"] != "none" and not 0.0 <= values["noise.rate"] < 1.0:
        raise ValueError("noise.rate must lie in [0, 1)")


def resolve(overrides=None):
    """Typed RunConfig from a {key: str-or-value} override mapping."""
    values = {k: d for k, (d, _) in DEFAULTS.items()}
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}; valid keys: "
                             + ", ".join(sorted(DEFAULTS)))
        parser = DEFAULTS[key][1]
        try:
            values[key] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"config key {key}: cannot parse {raw!r}") from exc
    _validate(values)
    return RunConfig(values=values)


def load_config(path):
    """Parse a flat key=value config file into a resolved RunConfig."""
    overrides = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = value
    return resolve(overrides)
