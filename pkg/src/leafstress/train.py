"""SGD training loop with step learning-rate decay and best-checkpoint retention."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import augment as A
from . import layers as L
from .checkpoint import Checkpoint
from .errors import BatchTooSmall, EmptyDataset, InvalidConfig, LabelMissing, MissingSeverity, OutOfRange, ShapeMismatch
from .model import MultiTaskNet
from .tensor import RngStream

log = logging.getLogger(__name__)

NO_WEIGHT_DECAY_SUFFIXES = (".bias", ".gamma", ".beta")


@dataclass
class SgdConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    epochs: int = 100
    batch_size: int = 32

    def validate(self):
        if self.lr0 <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("lr0, epochs and batch_size must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise InvalidConfig("momentum and weight_decay must be non-negative")
        return self


@dataclass
class LrSchedule:
    """Piecewise-constant decay: multiply by alternating factors every ``period`` epochs.

    ``half_first=True`` gives factors 1/2, 1/5, 1/2, 1/5, ...; False swaps them.
    """

    period: int = 20
    half_first: bool = True

    def factors(self):
        half, fifth = Fraction(1, 2), Fraction(1, 5)
        return (half, fifth) if self.half_first else (fifth, half)


def lr_at_epoch(schedule: LrSchedule, epoch: int, lr0: float = 0.01, epochs: int = 100) -> float:
    if not 0 <= epoch < epochs:
        raise OutOfRange(f"epoch {epoch} outside [0, {epochs})")
    lr = Fraction(repr(float(lr0)))
    factors = schedule.factors()
    for i in range(epoch // schedule.period):
        lr *= factors[i % 2]
    # exact rational product rounded once, so 0.01 * 1/2 * 1/5 is exactly 0.001
    return float(lr)


def sgd_step(params: dict, grads: dict, velocity: dict, cfg: SgdConfig, lr: float):
    """In-place momentum SGD: ``v = mu*v + (g + wd*w)``, ``w -= lr*v``.

    Weight decay is skipped for biases and batch-norm affine parameters.
    Missing velocity entries start at zero.
    """
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {w.shape}")
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(w)
        elif v.shape != w.shape:
            raise ShapeMismatch(f"{name}: velocity {v.shape} vs param {w.shape}")
        step = g
        if cfg.weight_decay and not name.endswith(NO_WEIGHT_DECAY_SUFFIXES):
            step = g + w.dtype.type(cfg.weight_decay) * w
        v *= w.dtype.type(cfg.momentum)
        v += step
        w -= w.dtype.type(lr) * v
    return params, velocity


@dataclass
class ArrayDataset:
    """Images ``N x 3 x H x W`` with integer labels; severity -1 means absent."""

    images: np.ndarray
    stress: np.ndarray
    severity: np.ndarray | None = None
    ids: list | None = None

    def __post_init__(self):
        self.stress = np.asarray(self.stress, dtype=np.int64)
        if self.severity is not None:
            self.severity = np.asarray(self.severity, dtype=np.int64)
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.images))]

    def __len__(self):
        return len(self.images)

    def labels(self, task):
        if task == "stress":
            return self.stress
        if self.severity is None:
            raise MissingSeverity("dataset carries no severity labels")
        return self.severity

    def check_tasks(self, tasks, k=5):
        for task in tasks:
            y = self.labels(task)
            if np.any(y < 0):
                err = MissingSeverity if task == "severity" else LabelMissing
                raise err(f"{int(np.sum(y < 0))} records lack a {task} label")
            if np.any(y >= k):
                raise InvalidConfig(f"{task} label out of range")


def one_hot(y, k, dtype=np.float32):
    out = np.zeros((len(y), k), dtype=dtype)
    out[np.arange(len(y)), y] = 1
    return out


def make_batches(order, batch_size):
    """Consecutive chunks; a trailing singleton joins the previous chunk."""
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    train_acc: dict
    val_acc: dict
    seconds: float


@dataclass
class TrainReport:
    tasks: tuple
    epochs: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def val_losses(self):
        return [e.val_loss for e in self.epochs]

    def mean_epoch_seconds(self):
        return float(np.mean([e.seconds for e in self.epochs])) if self.epochs else 0.0

    def numbers(self):
        """Every reported number except wall time (which is hardware noise)."""
        rows = []
        for e in self.epochs:
            rows.append((e.epoch, e.lr, e.train_loss, e.val_loss, *[e.train_acc[t] for t in self.tasks], *[e.val_acc[t] for t in self.tasks]))
        return rows, self.best_epoch

    def write_csv(self, path):
        header = ["epoch", "lr", "train_loss", "val_loss"]
        header += [f"train_acc_{t}" for t in self.tasks] + [f"val_acc_{t}" for t in self.tasks] + ["seconds"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for e in self.epochs:
                w.writerow(
                    [e.epoch, repr(e.lr), repr(e.train_loss), repr(e.val_loss)]
                    + [repr(e.train_acc[t]) for t in self.tasks]
                    + [repr(e.val_acc[t]) for t in self.tasks]
                    + [f"{e.seconds:.4f}"]
                )

    @classmethod
    def read_csv(cls, path) -> "TrainReport":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        tasks = tuple(k[len("val_acc_") :] for k in rows[0] if k.startswith("val_acc_")) if rows else ()
        rep = cls(tasks)
        for r in rows:
            rep.epochs.append(
                EpochRecord(
                    int(r["epoch"]), float(r["lr"]), float(r["train_loss"]), float(r["val_loss"]),
                    {t: float(r[f"train_acc_{t}"]) for t in tasks},
                    {t: float(r[f"val_acc_{t}"]) for t in tasks},
                    float(r["seconds"]),
                )
            )
        rep.best_epoch = best_epoch(rep.val_losses)
        return rep


def best_epoch(val_losses):
    """argmin with ties going to the earliest epoch."""
    if not val_losses:
        return -1
    return int(np.argmin(np.asarray(val_losses)))


def evaluate_arrays(net: MultiTaskNet, data: ArrayDataset, batch_size=64):
    """Eval-mode pass: ``(mean total loss, {task: accuracy}, {task: preds}, features)``."""
    tasks = net.tasks
    total = 0.0
    preds = {t: [] for t in tasks}
    feats = []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        logits, f, _ = net.forward(data.images[idx], train=False)
        feats.append(f)
        for t in tasks:
            y = data.labels(t)[idx]
            loss, _ = L.softmax_cross_entropy(logits[t], one_hot(y, logits[t].shape[1], logits[t].dtype))
            total += loss * len(idx)
            preds[t].append(np.argmax(logits[t], axis=1))
    preds = {t: np.concatenate(p) for t, p in preds.items()}
    acc = {t: float(np.mean(preds[t] == data.labels(t))) for t in tasks}
    return total / len(data), acc, preds, np.concatenate(feats)


def snapshot(net: MultiTaskNet, epoch: int, val_loss: float) -> Checkpoint:
    return Checkpoint({k: v.copy() for k, v in net.state_dict().items()}, epoch, val_loss, net.cfg.fingerprint())


def train(
    net: MultiTaskNet,
    train_set: ArrayDataset,
    val_set: ArrayDataset,
    cfg: SgdConfig | None = None,
    schedule: LrSchedule | None = None,
    augment_config: A.AugmentConfig | None = None,
    seed: int = 0,
):
    """Train ``net`` in place; returns ``(TrainReport, best Checkpoint)``.

    Each epoch reshuffles with a stream keyed by ``(seed, epoch)``, augments
    sample ``i`` with a stream keyed by ``(seed, epoch, i)``, optionally mixes
    each batch, takes one SGD step per batch, then scores the validation set
    in eval mode. The checkpoint with the lowest validation loss is kept.
    """
    cfg = (cfg or SgdConfig()).validate()
    schedule = schedule or LrSchedule()
    aug = (augment_config or A.AugmentConfig()).validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")
    if len(train_set) < 2:
        raise BatchTooSmall("training needs at least two samples")
    tasks = net.tasks
    ks = {t: net.heads[t].weight.shape[0] for t in tasks}
    train_set.check_tasks(tasks)
    val_set.check_tasks(tasks)
    dtype = net.heads_dtype()

    params = dict(net.named_parameters())
    velocity = {}
    report = TrainReport(tasks)
    best, best_loss = None, np.inf
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = lr_at_epoch(schedule, epoch, cfg.lr0, cfg.epochs)
        order = RngStream.derive(seed, "shuffle", epoch).permutation(len(train_set))
        loss_sum = 0.0
        correct = {t: 0 for t in tasks}
        for b, idx in enumerate(make_batches(order, cfg.batch_size)):
            images = train_set.images[idx].astype(dtype, copy=True)
            if aug.enabled:
                for row, i in enumerate(idx):
                    images[row] = A.augment_image(images[row], aug, RngStream.derive(seed, "augment", epoch, int(i)))
            hard = {t: train_set.labels(t)[idx] for t in tasks}
            targets = {t: one_hot(hard[t], ks[t], dtype) for t in tasks}
            if aug.mixup_enabled:
                lam, partners = A.mixup_plan(len(idx), aug.mixup_alpha, RngStream.derive(seed, "mixup", epoch, b))
                images, targets = A.mix_arrays(images, targets, lam, partners, aug.mixup_heads)
            logits, _, cache = net.forward(images, train=True)
            dlogits = {}
            for t in tasks:
                loss, dlogits[t] = L.softmax_cross_entropy(logits[t], targets[t])
                loss_sum += loss * len(idx)
                correct[t] += int(np.sum(np.argmax(logits[t], axis=1) == hard[t]))
            grads = net.backward(dlogits, cache)
            sgd_step(params, grads, velocity, cfg, lr)
        val_loss, val_acc, _, _ = evaluate_arrays(net, val_set, max(cfg.batch_size, 2))
        rec = EpochRecord(
            epoch, lr, loss_sum / len(train_set), val_loss,
            {t: correct[t] / len(train_set) for t in tasks}, val_acc,
            time.perf_counter() - t0,
        )
        report.epochs.append(rec)
        if val_loss < best_loss:
            best, best_loss = snapshot(net, epoch, val_loss), val_loss
        log.info(
            "epoch %d lr %.5g train_loss %.4f val_loss %.4f val_acc %s (%.1fs)",
            epoch, lr, rec.train_loss, val_loss, {t: round(a, 4) for t, a in val_acc.items()}, rec.seconds,
        )
    report.best_epoch = best_epoch(report.val_losses)
    return report, best
