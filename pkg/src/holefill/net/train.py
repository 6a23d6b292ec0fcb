"""Deterministic two-stage training, checkpoints and loss traces."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, TrainingDivergedError
from .model import STAGE1, STAGE2, NetConfig, UVTranNet, param_group

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "holefill-uvtran"
CHECKPOINT_VERSION = 1
TRACE_FIELDS = ("epoch", "stage", "loss", "top1_acc")


@dataclass(frozen=True)
class TrainConfig:
    epochs_low: int = 300
    epochs_high: int = 200
    optimizer: str = "adam"
    lr: float = 0.005
    momentum: float = 0.9
    beta2: float = 0.999
    chunk: int = 256
    #: Multiplier on the knot MSE; knot errors are O(1e-2) while the voxel
    #: cross-entropy is O(1), so unit weight leaves the knot heads starved.
    knot_weight: float = 1.0
    #: Stop a stage early once evaluation-mode training accuracy is 100%
    #: (checked every ``check_every`` epochs; 0 disables the check).
    check_every: int = 0

    def __post_init__(self):
        if self.optimizer not in ("momentum", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.chunk < 1 or self.knot_weight < 0:
            raise ConfigurationError("lr and chunk must be positive")


class Optimizer:
    """Momentum gradient descent or Adam over a subset of parameters."""

    def __init__(self, params: dict, names, cfg: TrainConfig):
        self.params, self.names, self.cfg = params, list(names), cfg
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}
        self.t = 0

    def step(self, grads: dict):
        cfg = self.cfg
        self.t += 1
        for k in self.names:
            g = grads[k]
            if cfg.optimizer == "momentum":
                self.m[k] = cfg.momentum * self.m[k] + g
                self.params[k] -= cfg.lr * self.m[k]
            else:
                self.m[k] = cfg.momentum * self.m[k] + (1 - cfg.momentum) * g
                self.v[k] = cfg.beta2 * self.v[k] + (1 - cfg.beta2) * g * g
                mh = self.m[k] / (1 - cfg.momentum ** self.t)
                vh = self.v[k] / (1 - cfg.beta2 ** self.t)
                self.params[k] -= cfg.lr * mh / (np.sqrt(vh) + 1e-8)


@dataclass
class TrainingSet:
    """Arrays extracted from dataset records, in canonical (id) order."""

    boundaries: np.ndarray      # (B, n, 3)
    coarse: np.ndarray          # (B, 64, 3)
    fine: np.ndarray            # (B, 64, 3)
    knots: np.ndarray           # (B, 8)
    coarse_bins: int = 10
    fine_bins: int = 100

    @classmethod
    def from_records(cls, records) -> "TrainingSet":
        recs = sorted(records, key=lambda r: r.record_id)
        if not recs:
            raise ValueError("no training records")
        lab = recs[0].target_labels
        return cls(np.stack([r.boundary.samples for r in recs]),
                   np.stack([r.target_labels.coarse.indices for r in recs]),
                   np.stack([r.target_labels.fine_indices() for r in recs]),
                   np.stack([r.target_knots for r in recs]),
                   lab.coarse.n_bins, lab.coarse.n_bins * lab.factor)

    def __len__(self):
        return len(self.boundaries)

    def low_labels(self, cfg: NetConfig) -> np.ndarray:
        """Labels at the low-stage resolution: coarse bins, or fine bins for
        a single-stage configuration."""
        if cfg.V_N_low == self.coarse_bins:
            return self.coarse
        if cfg.V_N_low == self.fine_bins:
            return self.fine
        raise ConfigurationError(f"no labels stored for {cfg.V_N_low} bins per axis")


def _chunks(n, size):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _accumulate(total, grads, names):
    for k in names:
        total[k] += grads[k]


def _check_finite(loss, stage, epoch):
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"loss became {loss} in {stage} stage at epoch {epoch}")


def low_stage_accuracy(model: UVTranNet, data: TrainingSet, chunk: int = 256) -> float:
    labels = data.low_labels(model.cfg)
    hits = 0
    for s in _chunks(len(data), chunk):
        logits = model.forward_low(data.boundaries[s])[0]
        hits += int(np.sum(np.argmax(logits, axis=-1) == labels[s]))
    return hits / labels.size


def _dropout_rng(seed, stage, epoch):
    return np.random.default_rng([seed, stage, epoch])


def train_low(model: UVTranNet, data: TrainingSet, tcfg: TrainConfig,
              epochs: int, trace: list):
    names = [k for k in model.params if param_group(k) in STAGE1]
    opt = Optimizer(model.params, names, tcfg)
    labels = data.low_labels(model.cfg)
    B = len(data)
    for epoch in range(1, epochs + 1):
        rng = _dropout_rng(model.cfg.seed, 1, epoch)
        total = {k: np.zeros_like(model.params[k]) for k in names}
        loss = correct = 0.0
        for s in _chunks(B, tcfg.chunk):
            l, g, aux = model.low_loss_and_grad(
                data.boundaries[s], labels[s], data.knots[s], 1.0 / B, rng, tcfg.knot_weight)
            _accumulate(total, g, names)
            loss += l
            correct += aux["correct"]
        _check_finite(loss, "low", epoch)
        opt.step(total)
        trace.append({"epoch": epoch, "stage": "low", "loss": loss,
                      "top1_acc": correct / B})
        if tcfg.check_every and epoch % tcfg.check_every == 0:
            if low_stage_accuracy(model, data, tcfg.chunk) == 1.0:
                log.info("low stage reached full training accuracy at epoch %d", epoch)
                break


def high_stage_inputs(model: UVTranNet, data: TrainingSet, chunk: int = 256):
    """Frozen low-stage outputs: boundary features, coarse points and the
    sub-bin targets relative to the predicted coarse bins."""
    Fp, lcp, sub = [], [], []
    for s in _chunks(len(data), chunk):
        logits, _, _, l, f = model.forward_low(data.boundaries[s])
        Fp.append(f)
        lcp.append(l)
        sub.append(model.sub_labels_for(np.argmax(logits, axis=-1), data.fine[s]))
    return np.concatenate(Fp), np.concatenate(lcp), np.concatenate(sub)


def train_high(model: UVTranNet, data: TrainingSet, tcfg: TrainConfig,
               epochs: int, trace: list, first_epoch: int = 1):
    names = [k for k in model.params if param_group(k) in STAGE2]
    opt = Optimizer(model.params, names, tcfg)
    Fp, lcp, sub = high_stage_inputs(model, data, tcfg.chunk)
    B = len(data)
    for epoch in range(first_epoch, first_epoch + epochs):
        rng = _dropout_rng(model.cfg.seed, 2, epoch)
        total = {k: np.zeros_like(model.params[k]) for k in names}
        loss = correct = 0.0
        for s in _chunks(B, tcfg.chunk):
            l, g, aux = model.high_loss_and_grad(Fp[s], lcp[s], sub[s], 1.0 / B, rng)
            _accumulate(total, g, names)
            loss += l
            correct += aux["correct"]
        _check_finite(loss, "high", epoch)
        opt.step(total)
        trace.append({"epoch": epoch, "stage": "high", "loss": loss,
                      "top1_acc": correct / B})


def train(records, cfg: NetConfig, tcfg: TrainConfig = TrainConfig()):
    """Train a fresh model on dataset records; returns (model, loss trace).

    Records are put in id order first, and gradients are summed over chunks
    in a fixed order, so the result does not depend on input order. A
    single-stage configuration spends both epoch budgets on the low stage.
    """
    data = TrainingSet.from_records(records)
    model = UVTranNet(cfg)
    trace: list = []
    if cfg.progressive:
        train_low(model, data, tcfg, tcfg.epochs_low, trace)
        train_high(model, data, tcfg, tcfg.epochs_high, trace,
                   first_epoch=len(trace) + 1)
    else:
        train_low(model, data, tcfg, tcfg.epochs_low + tcfg.epochs_high, trace)
    return model, trace


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def save_checkpoint(model: UVTranNet, path, extra=None):
    """``.npz`` holding every tensor plus a JSON header with the config,
    seed and a per-tensor shape manifest."""
    meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg), "seed": model.cfg.seed,
            "shapes": {k: list(v.shape) for k, v in model.params.items()}}
    if extra:
        meta["extra"] = extra
    arrays = {k: v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> UVTranNet:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"{path} is not a model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k: z[k].copy() for k in meta["shapes"]}
    for k, shape in meta["shapes"].items():
        if list(params[k].shape) != shape:
            raise ConfigurationError(f"tensor {k} has shape {params[k].shape}, "
                                     f"manifest says {shape}")
    cfg = NetConfig.from_dict(meta["config"])
    expected = UVTranNet(cfg).params
    if set(expected) != set(params):
        raise ConfigurationError("checkpoint tensors do not match the configuration")
    return UVTranNet(cfg, params)


def write_trace(trace, path):
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for row in trace:
            w.writerow({"epoch": row["epoch"], "stage": row["stage"],
                        "loss": repr(float(row["loss"])),
                        "top1_acc": repr(float(row["top1_acc"]))})


def read_trace(path) -> list:
    with open(path) as fh:
        return [{"epoch": int(r["epoch"]), "stage": r["stage"],
                 "loss": float(r["loss"]), "top1_acc": float(r["top1_acc"])}
                for r in csv.DictReader(fh)]
