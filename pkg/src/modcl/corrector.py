"""Corrector and blender networks and their two-stage training loop.

Both nets are one-hidden-layer ReLU MLPs whose output is added to the
logits of the detector scores before the sigmoid, so a zero output layer
reproduces the detector scores unchanged:

    corrector:  y_c = sigmoid(logit(p) + W2 relu(W1 p + b1) + b2)
    blender:    y_b = sigmoid(logit(p) + W2 relu(W1 [p, y_c] + b1) + b2)

Each epoch runs Stage 1 (constrained loss on unlabeled scores, corrector
only) and then Stage 2 (constrained loss plus cross-entropy on labeled
scores, both nets).  Gradients are computed by hand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, LabelSpaceMismatch, ParseError
from .fuzzy import BCE_EPS, DEFAULT_CONSTRAINT_WEIGHT, bce, filter_anchors, loss_s1_values

LOGIT_EPS = 1e-6
KINDS = ("corrector", "blender")


@dataclass(frozen=True, eq=False)
class DenseNet:
    kind: str
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown network kind {self.kind!r}")
        h, d_in = self.w1.shape
        n, h2 = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (n,):
            raise InputError("inconsistent layer shapes")
        expected_in = n if self.kind == "corrector" else 2 * n
        if d_in != expected_in:
            raise InputError(f"{self.kind} input width {d_in} != {expected_in}")
        for arr in self.params():
            if not np.all(np.isfinite(arr)):
                raise InputError("non-finite parameters")

    @property
    def num_labels(self) -> int:
        return self.w2.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def params(self):
        return (self.w1, self.b1, self.w2, self.b2)

    def with_params(self, params) -> "DenseNet":
        return replace(self, w1=params[0], b1=params[1], w2=params[2], b2=params[3])


def init_net(kind: str, n: int, hidden: int, rng: np.random.Generator, out_scale: float = 0.01) -> DenseNet:
    """He-initialized hidden layer; output layer drawn at ``out_scale`` (0 gives exact identity)."""
    d_in = n if kind == "corrector" else 2 * n
    w1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(hidden, d_in))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, out_scale, size=(n, hidden)) if out_scale else np.zeros((n, hidden))
    b2 = np.zeros(n)
    return DenseNet(kind, w1, b1, w2, b2)


def logit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), LOGIT_EPS, 1.0 - LOGIT_EPS)
    return np.log(p) - np.log1p(-p)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(net: DenseNet, x, base):
    pre = x @ net.w1.T + net.b1
    h = np.maximum(pre, 0.0)
    z = logit(base) + h @ net.w2.T + net.b2
    return sigmoid(z), (x, pre, h)


def _backward(net: DenseNet, cache, d_z):
    """Parameter gradients and input gradient given dL/dz (batch-summed)."""
    x, pre, h = cache
    g_w2 = d_z.T @ h
    g_b2 = d_z.sum(axis=0)
    d_h = (d_z @ net.w2) * (pre > 0)
    g_w1 = d_h.T @ x
    g_b1 = d_h.sum(axis=0)
    d_x = d_h @ net.w1
    return (g_w1, g_b1, g_w2, g_b2), d_x


def _as_batch(p, n):
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != n:
        raise LabelSpaceMismatch(f"input width {p.shape[1]} != {n}")
    return p, single


def corrector_forward(net: DenseNet, p_det) -> np.ndarray:
    p, single = _as_batch(p_det, net.num_labels)
    y, _ = _forward(net, p, p)
    return y[0] if single else y


def blender_forward(net: DenseNet, p_det, y_c) -> np.ndarray:
    p, single = _as_batch(p_det, net.num_labels)
    yc, _ = _as_batch(y_c, net.num_labels)
    if yc.shape != p.shape:
        raise LabelSpaceMismatch("detector and corrector batches differ in shape")
    y, _ = _forward(net, np.concatenate([p, yc], axis=1), p)
    return y[0] if single else y


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.05
    hidden: int = 64
    batch_size1: int = 64
    batch_size2: int = 64
    constraint_weight: float = DEFAULT_CONSTRAINT_WEIGHT
    seed: int = 0
    filtered: bool = False
    out_scale: float = 0.01

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.hidden < 1:
            raise InputError("epochs must be >= 0, learning_rate > 0, hidden >= 1")
        if self.batch_size1 < 1 or self.batch_size2 < 1:
            raise InputError("batch sizes must be positive")
        if self.constraint_weight < 0:
            raise InputError("constraint_weight must be >= 0")


@dataclass(frozen=True, eq=False)
class SemiSupervisedSet:
    labeled: np.ndarray
    labels: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        n = self.labeled.shape[1] if self.labeled.ndim == 2 else None
        if self.labels.shape != self.labeled.shape:
            raise InputError("labels must match labeled scores in shape")
        if self.unlabeled.ndim != 2 or (n is not None and self.unlabeled.size and self.unlabeled.shape[1] != n):
            raise InputError("unlabeled scores must be (M, N)")


@dataclass
class TraceEntry:
    epoch: int
    stage: int
    batch: int
    loss: float


def _batches(m: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(m)
    return [perm[i:i + size] for i in range(0, m, size)]


def _epoch_rng(seed: int, epoch: int, stage: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stage])


def _sgd(params, grads, lr):
    return tuple(p - lr * g for p, g in zip(params, grads))


def stage1_loss_and_grads(net: DenseNet, p, rs, filtered: bool = False):
    """Mean L_S1 of corrector outputs over the batch and its parameter gradients."""
    if filtered:
        keep = filter_anchors(p)
        p = p[keep]
    if len(p) == 0:
        return 0.0, tuple(np.zeros_like(a) for a in net.params())
    y, cache = _forward(net, p, p)
    values, g_y = loss_s1_values(rs, y)
    b = len(p)
    d_z = g_y / b * y * (1.0 - y)
    grads, _ = _backward(net, cache, d_z)
    return float(values.mean()), grads


def stage2_loss_and_grads(c_net: DenseNet, b_net: DenseNet, p, labels, rs, weight: float, eps: float = BCE_EPS):
    """Mean of ``weight*L_S1(y_c) + BCE(y_c) + BCE(y_b)`` and gradients for both nets.

    The blender's dependence on ``y_c`` is included in the corrector gradient.
    """
    b = len(p)
    y_c, c_cache = _forward(c_net, p, p)
    x_b = np.concatenate([p, y_c], axis=1)
    y_b, b_cache = _forward(b_net, x_b, p)
    s1, g_s1 = loss_s1_values(rs, y_c)
    bce_c, g_bc = bce(y_c, labels, eps)
    bce_b, g_bb = bce(y_b, labels, eps)
    value = float(np.mean(weight * s1 + bce_c + bce_b))

    d_zb = g_bb / b * y_b * (1.0 - y_b)
    b_grads, d_xb = _backward(b_net, b_cache, d_zb)
    n = c_net.num_labels
    d_yc = (weight * g_s1 + g_bc) / b + d_xb[:, n:]
    c_grads, _ = _backward(c_net, c_cache, d_yc * y_c * (1.0 - y_c))
    return value, c_grads, b_grads


def train_stage1(net: DenseNet, unlabeled, rs, cfg: TrainConfig, epoch: int = 0):
    """One epoch of minibatch gradient descent on L_S1 of corrector outputs."""
    unlabeled = np.asarray(unlabeled, dtype=np.float64)
    if len(unlabeled) == 0:
        raise InputError("stage 1 needs a nonempty unlabeled set")
    trace = []
    params = net.params()
    for k, idx in enumerate(_batches(len(unlabeled), cfg.batch_size1, _epoch_rng(cfg.seed, epoch, 1))):
        loss, grads = stage1_loss_and_grads(net.with_params(params), unlabeled[idx], rs, cfg.filtered)
        params = _sgd(params, grads, cfg.learning_rate)
        trace.append(TraceEntry(epoch, 1, k, loss))
    return net.with_params(params), trace


def train_stage2(c_net: DenseNet, b_net: DenseNet, labeled, labels, rs, cfg: TrainConfig, epoch: int = 0):
    """One epoch of minibatch gradient descent on the Stage 2 loss, updating both nets."""
    labeled = np.asarray(labeled, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(labeled) == 0:
        raise InputError("stage 2 needs a nonempty labeled set")
    trace = []
    cp, bp = c_net.params(), b_net.params()
    for k, idx in enumerate(_batches(len(labeled), cfg.batch_size2, _epoch_rng(cfg.seed, epoch, 2))):
        loss, cg, bg = stage2_loss_and_grads(
            c_net.with_params(cp), b_net.with_params(bp), labeled[idx], labels[idx], rs, cfg.constraint_weight
        )
        cp = _sgd(cp, cg, cfg.learning_rate)
        bp = _sgd(bp, bg, cfg.learning_rate)
        trace.append(TraceEntry(epoch, 2, k, loss))
    return c_net.with_params(cp), b_net.with_params(bp), trace


def init_models(n: int, cfg: TrainConfig):
    rng = np.random.default_rng(cfg.seed)
    c_net = init_net("corrector", n, cfg.hidden, rng, cfg.out_scale)
    b_net = init_net("blender", n, cfg.hidden, rng, cfg.out_scale)
    return c_net, b_net


def train_semisupervised(data: SemiSupervisedSet, rs, cfg: TrainConfig, require_unlabeled: bool = True,
                         models=None, callback=None):
    """Alternate Stage 1 then Stage 2 every epoch. Deterministic given ``cfg.seed``.

    ``callback(epoch, c_net, b_net)`` runs after each epoch if given.
    """
    if len(data.labeled) == 0:
        raise InputError("labeled partition is empty")
    if require_unlabeled and len(data.unlabeled) == 0:
        raise InputError("unlabeled partition is empty")
    c_net, b_net = models if models is not None else init_models(data.labeled.shape[1], cfg)
    trace: list[TraceEntry] = []
    for epoch in range(cfg.epochs):
        if len(data.unlabeled):
            c_net, t1 = train_stage1(c_net, data.unlabeled, rs, cfg, epoch)
            trace += t1
        c_net, b_net, t2 = train_stage2(c_net, b_net, data.labeled, data.labels, rs, cfg, epoch)
        trace += t2
        if callback is not None:
            callback(epoch, c_net, b_net)
    return c_net, b_net, trace


# -- checkpoints ----------------------------------------------------------
#
# little-endian throughout
#   header:  8s magic b"MODCLCKP" | u32 version (1) | u32 net count
#   per net: u8 kind (0 corrector, 1 blender) | u32 input | u32 hidden | u32 output
#            then float64 arrays, row-major: W1 (hidden x input), b1 (hidden),
#            W2 (output x hidden), b2 (output)

MAGIC = b"MODCLCKP"
VERSION = 1
_HEADER = struct.Struct("<8sII")
_NET = struct.Struct("<BIII")


def save_checkpoint(nets) -> bytes:
    out = [_HEADER.pack(MAGIC, VERSION, len(nets))]
    for net in nets:
        h, d_in = net.w1.shape
        out.append(_NET.pack(KINDS.index(net.kind), d_in, h, net.num_labels))
        for arr in net.params():
            out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def load_checkpoint(blob: bytes) -> list[DenseNet]:
    try:
        magic, version, count = _HEADER.unpack_from(blob, 0)
    except struct.error:
        raise ParseError("checkpoint truncated") from None
    if magic != MAGIC:
        raise ParseError("not a checkpoint file")
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    off = _HEADER.size
    nets = []
    for _ in range(count):
        try:
            kind, d_in, h, n = _NET.unpack_from(blob, off)
        except struct.error:
            raise ParseError("checkpoint truncated") from None
        off += _NET.size
        arrays = []
        for shape in ((h, d_in), (h,), (n, h), (n,)):
            size = int(np.prod(shape))
            if off + 8 * size > len(blob):
                raise ParseError("checkpoint truncated")
            arrays.append(np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64))
            off += 8 * size
        if kind >= len(KINDS):
            raise ParseError(f"unknown network kind {kind}")
        nets.append(DenseNet(KINDS[kind], *arrays))
    if off != len(blob):
        raise ParseError("trailing bytes in checkpoint")
    return nets
