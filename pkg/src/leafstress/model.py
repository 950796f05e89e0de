"""Shared-trunk network with one or two classification heads.

The default ("LeafNet-Mini") is a small residual network: a 3x3 stem
conv-bn-relu, then residual stages of widths (16, 32, 64) whose first block
downsamples by 2, then global average pooling to a 64-d feature vector. The
stress and severity heads are parallel dense layers on that vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .errors import BatchTooSmall, InvalidConfig, ShapeMismatch
from .tensor import RngStream

MODES = ("single_task_stress", "single_task_severity", "multi_task")
TASKS = ("stress", "severity")
BLOCK_KINDS = ("residual", "plain")


@dataclass
class ArchConfig:
    stem_width: int = 16
    widths: tuple = (16, 32, 64)
    blocks_per_stage: int = 1
    block: str = "residual"
    input_size: int = 224
    mode: str = "multi_task"
    num_stress: int = 5
    num_severity: int = 5
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def validate(self):
        if self.block not in BLOCK_KINDS:
            raise InvalidConfig(f"unknown block kind {self.block!r}")
        if self.mode not in MODES:
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        widths = tuple(int(w) for w in self.widths)
        if not widths or min(widths) < 1 or self.stem_width < 1 or self.blocks_per_stage < 1:
            raise InvalidConfig("widths and block counts must be positive")
        if self.num_stress < 2 or self.num_severity < 2:
            raise InvalidConfig("heads need at least two classes")
        down = 2 ** len(widths)
        if self.input_size < down or self.input_size % down:
            raise InvalidConfig(f"input_size must be a positive multiple of {down}")
        self.widths = widths
        return self

    @property
    def tasks(self):
        if self.mode == "multi_task":
            return TASKS
        return (self.mode.removeprefix("single_task_"),)

    def fingerprint(self) -> str:
        """Hash over everything that shapes the parameters, plus the mode."""
        d = asdict(self)
        d.pop("input_size")
        d["widths"] = list(d["widths"])
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _he_conv(stream, c_out, c_in, k, dtype):
    std = np.sqrt(2.0 / (c_in * k * k))
    w = stream.normal(c_out * c_in * k * k) * std
    return L.Conv2dParams(w.reshape(c_out, c_in, k, k).astype(dtype), np.zeros(c_out, dtype))


class ConvBN:
    def __init__(self, conv: L.Conv2dParams, bn: L.BatchNormParams):
        self.conv = conv
        self.bn = bn

    def forward(self, x):
        y, c1 = L.conv2d_forward(x, self.conv)
        y, c2 = L.batchnorm2d_forward(y, self.bn)
        return y, (c1, c2)

    def backward(self, dout, cache, grads, prefix):
        c1, c2 = cache
        d, grads[prefix + ".bn.gamma"], grads[prefix + ".bn.beta"] = L.batchnorm2d_backward(dout, c2)
        d, grads[prefix + ".conv.weight"], grads[prefix + ".conv.bias"] = L.conv2d_backward(d, c1)
        return d

    def params(self, prefix):
        yield prefix + ".conv.weight", self.conv.weight
        yield prefix + ".conv.bias", self.conv.bias
        yield prefix + ".bn.gamma", self.bn.gamma
        yield prefix + ".bn.beta", self.bn.beta

    def buffers(self, prefix):
        yield prefix + ".bn.running_mean", self.bn.running_mean
        yield prefix + ".bn.running_var", self.bn.running_var


class ResidualBlock:
    """conv-bn-relu, conv-bn, plus identity or 1x1 projection skip, then relu."""

    def __init__(self, c_in, c_out, stride, stream, dtype, bn_kw, skip=True):
        conv1 = _he_conv(stream, c_out, c_in, 3, dtype)
        conv1.stride, conv1.padding = stride, 1
        conv2 = _he_conv(stream, c_out, c_out, 3, dtype)
        conv2.padding = 1
        self.a = ConvBN(conv1, L.BatchNormParams.create(c_out, dtype, **bn_kw))
        self.b = ConvBN(conv2, L.BatchNormParams.create(c_out, dtype, **bn_kw))
        self.skip = skip
        self.proj = None
        if skip and (stride != 1 or c_in != c_out):
            self.proj = _he_conv(stream, c_out, c_in, 1, dtype)
            self.proj.stride = stride

    def forward(self, x):
        y, ca = self.a.forward(x)
        y, ma = L.relu_forward(y)
        y, cb = self.b.forward(y)
        cp = None
        if self.skip:
            if self.proj is not None:
                s, cp = L.conv2d_forward(x, self.proj)
            else:
                s = x
            y = y + s
        out, mo = L.relu_forward(y)
        return out, (ca, ma, cb, cp, mo)

    def backward(self, dout, cache, grads, prefix):
        ca, ma, cb, cp, mo = cache
        d = L.relu_backward(dout, mo)
        dskip = None
        if self.skip:
            if cp is not None:
                dskip, grads[prefix + ".proj.weight"], grads[prefix + ".proj.bias"] = L.conv2d_backward(d, cp)
            else:
                dskip = d
        d = self.b.backward(d, cb, grads, prefix + ".b")
        d = L.relu_backward(d, ma)
        d = self.a.backward(d, ca, grads, prefix + ".a")
        return d if dskip is None else d + dskip

    def params(self, prefix):
        yield from self.a.params(prefix + ".a")
        yield from self.b.params(prefix + ".b")
        if self.proj is not None:
            yield prefix + ".proj.weight", self.proj.weight
            yield prefix + ".proj.bias", self.proj.bias

    def buffers(self, prefix):
        yield from self.a.buffers(prefix + ".a")
        yield from self.b.buffers(prefix + ".b")

    def bns(self):
        return (self.a.bn, self.b.bn)


class Trunk:
    def __init__(self, cfg: ArchConfig, stream: RngStream, dtype):
        bn_kw = {"momentum": cfg.bn_momentum, "eps": cfg.bn_eps}
        stem = _he_conv(stream, cfg.stem_width, 3, 3, dtype)
        stem.padding = 1
        self.stem = ConvBN(stem, L.BatchNormParams.create(cfg.stem_width, dtype, **bn_kw))
        self.blocks = []
        c = cfg.stem_width
        for width in cfg.widths:
            for i in range(cfg.blocks_per_stage):
                stride = 2 if i == 0 else 1
                self.blocks.append(ResidualBlock(c, width, stride, stream, dtype, bn_kw, skip=cfg.block == "residual"))
                c = width
        self.feature_dim = c
        self.n_down = len(cfg.widths)

    def _names(self):
        return [f"trunk.block{i}" for i in range(len(self.blocks))]

    def forward(self, x):
        y, cs = self.stem.forward(x)
        y, ms = L.relu_forward(y)
        caches = []
        for blk in self.blocks:
            y, c = blk.forward(y)
            caches.append(c)
        feats, cp = L.global_avgpool_forward(y)
        return feats, (cs, ms, caches, cp)

    def backward(self, dfeats, cache, grads):
        cs, ms, caches, cp = cache
        d = L.global_avgpool_backward(dfeats, cp)
        for name, blk, c in reversed(list(zip(self._names(), self.blocks, caches))):
            d = blk.backward(d, c, grads, name)
        d = L.relu_backward(d, ms)
        return self.stem.backward(d, cs, grads, "trunk.stem")

    def params(self):
        yield from self.stem.params("trunk.stem")
        for name, blk in zip(self._names(), self.blocks):
            yield from blk.params(name)

    def buffers(self):
        yield from self.stem.buffers("trunk.stem")
        for name, blk in zip(self._names(), self.blocks):
            yield from blk.buffers(name)

    def bns(self):
        out = [self.stem.bn]
        for blk in self.blocks:
            out.extend(blk.bns())
        return out


class MultiTaskNet:
    """Trunk plus a dict of dense heads keyed by task name."""

    def __init__(self, cfg: ArchConfig, trunk: Trunk, heads: dict):
        self.cfg = cfg
        self.trunk = trunk
        self.heads = heads

    @property
    def mode(self):
        return self.cfg.mode

    @property
    def tasks(self):
        return tuple(t for t in TASKS if t in self.heads)

    @property
    def feature_dim(self):
        return self.trunk.feature_dim

    def named_parameters(self):
        """Ordered (name, array) pairs of every trainable tensor."""
        out = list(self.trunk.params())
        for task in self.tasks:
            out.append((f"head.{task}.weight", self.heads[task].weight))
            out.append((f"head.{task}.bias", self.heads[task].bias))
        return out

    def named_buffers(self):
        return list(self.trunk.buffers())

    def state_dict(self):
        return dict(self.named_parameters() + self.named_buffers())

    def load_state_dict(self, state):
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        if missing:
            raise ShapeMismatch(f"state is missing tensors: {missing[:3]}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ShapeMismatch(f"{name}: expected {arr.shape}, got {src.shape}")
            arr[...] = src

    def trunk_parameters(self):
        return [a for _, a in self.trunk.params()]

    def num_parameters(self, part="all"):
        if part == "trunk":
            return sum(a.size for a in self.trunk_parameters())
        if part == "heads":
            return sum(h.weight.size + h.bias.size for h in self.heads.values())
        return sum(a.size for _, a in self.named_parameters())

    def with_mode(self, mode: str, seed: int = 0) -> "MultiTaskNet":
        """A net of another mode sharing this trunk's very tensors."""
        cfg = ArchConfig(**{**asdict(self.cfg), "mode": mode}).validate()
        heads = {t: self.heads[t] for t in cfg.tasks if t in self.heads}
        for t in cfg.tasks:
            if t not in heads:
                heads[t] = _make_head(cfg, t, seed, self.trunk.feature_dim, self.heads_dtype())
        return MultiTaskNet(cfg, self.trunk, heads)

    def heads_dtype(self):
        return self.trunk.stem.conv.weight.dtype

    def set_mode(self, train: bool):
        for bn in self.trunk.bns():
            bn.mode = "train" if train else "eval"

    def forward(self, images, train: bool = False):
        """Returns ``({task: logits}, features, cache)``."""
        images = np.asarray(images)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeMismatch(f"expected N x 3 x H x W images, got {images.shape}")
        down = 2**self.trunk.n_down
        if images.shape[2] % down or images.shape[3] % down:
            raise ShapeMismatch(f"H and W must be divisible by {down}")
        if train and images.shape[0] < 2:
            raise BatchTooSmall("train-mode forward needs at least 2 images")
        self.set_mode(train)
        x = images.astype(self.heads_dtype(), copy=False)
        feats, tcache = self.trunk.forward(x)
        logits, hcaches = {}, {}
        for task in self.tasks:
            logits[task], hcaches[task] = L.dense_forward(feats, self.heads[task])
        return logits, feats, (tcache, hcaches)

    def backward(self, dlogits: dict, cache):
        """Gradients for every parameter given upstream grads per head.

        Heads missing from ``dlogits`` contribute nothing; their own
        parameter gradients come back as zeros.
        """
        tcache, hcaches = cache
        grads = {}
        dfeats = None
        for task in self.tasks:
            h = self.heads[task]
            if task not in dlogits:
                grads[f"head.{task}.weight"] = np.zeros_like(h.weight)
                grads[f"head.{task}.bias"] = np.zeros_like(h.bias)
                continue
            dx, grads[f"head.{task}.weight"], grads[f"head.{task}.bias"] = L.dense_backward(dlogits[task], hcaches[task])
            dfeats = dx if dfeats is None else dfeats + dx
        if dfeats is None:
            dfeats = np.zeros((hcaches[self.tasks[0]][0].shape), dtype=self.heads_dtype())
        self.trunk.backward(dfeats, tcache, grads)
        return grads


def _make_head(cfg, task, seed, feature_dim, dtype):
    k = cfg.num_stress if task == "stress" else cfg.num_severity
    stream = RngStream.derive(seed, "init", "head", task)
    w = stream.normal(k * feature_dim) * np.sqrt(1.0 / feature_dim)
    return L.DenseParams(w.reshape(k, feature_dim).astype(dtype), np.zeros(k, dtype))


def build_model(cfg: ArchConfig | None = None, seed: int = 0, dtype=np.float32) -> MultiTaskNet:
    cfg = (cfg or ArchConfig()).validate()
    trunk = Trunk(cfg, RngStream.derive(seed, "init", "trunk"), dtype)
    heads = {t: _make_head(cfg, t, seed, trunk.feature_dim, dtype) for t in cfg.tasks}
    return MultiTaskNet(cfg, trunk, heads)


def forward(net: MultiTaskNet, images, mode: str = "eval"):
    """``(logits_stress, logits_severity, features)``; absent heads are None."""
    logits, feats, _ = net.forward(images, train=mode == "train")
    return logits.get("stress"), logits.get("severity"), feats


def multitask_loss(net: MultiTaskNet, images, targets: dict, train=True, tasks=None):
    """Equal-weight sum of per-head cross-entropies, with parameter gradients.

    ``targets`` maps task -> N x K row-stochastic matrix. ``tasks`` restricts
    which head losses contribute (all of the net's heads by default).
    Returns ``(total, {task: loss}, grads, logits, features)``.
    """
    tasks = net.tasks if tasks is None else tuple(tasks)
    logits, feats, cache = net.forward(images, train=train)
    losses, dlogits = {}, {}
    for task in tasks:
        losses[task], dlogits[task] = L.softmax_cross_entropy(logits[task], targets[task])
    grads = net.backward(dlogits, cache)
    total = float(sum(losses.values()))
    return total, losses, grads, logits, feats
