"""Weighted cross-entropy, Adam, and the mini-batch training loop."""
from dataclasses import dataclass, field
import csv
import logging
import time

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, NumericError, TrainingDiverged
from .tensor import as_tensor, make_op

log = logging.getLogger(__name__)


def cross_entropy(logits, targets, weights=None):
    """Mean over the batch of ``w[y] * -log softmax(logits)[y]``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    B, k = logits.shape
    if targets.shape != (B,):
        raise ContractError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.min() < 0 or targets.max() >= k:
        raise ContractError(f"targets must lie in [0, {k}), got range "
                            f"[{targets.min()}, {targets.max()}]")
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (k,):
        raise ContractError(f"expected {k} class weights, got {w.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    wy = w[targets]
    loss = np.array(np.sum(wy * (lse - z[rows, targets])) / B)

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1.0
        return (p * (float(g) * wy / B)[:, None],)

    return make_op(loss, (logits,), backward, "cross_entropy")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update.

    ``params`` maps names to tensors whose ``data`` is replaced; ``grads``
    maps the same names to arrays. Missing gradients count as zero.
    """
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter {name!r} {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 19
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    use_class_weights: bool = False
    early_stop_patience: int = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.batch_size) < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds")

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path, include_timing=True):
        cols = self.COLUMNS if include_timing else self.COLUMNS[:-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in cols[1:]])


def epoch_batches(n, batch_size, rng):
    """Shuffled index batches; a trailing batch of one sample joins the previous one."""
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def evaluate_loss(model, x, y, weights=None, batch_size=1024):
    """Inference-mode mean loss and accuracy."""
    logits = model.logits(x, batch_size)
    with T.no_grad():
        loss = cross_entropy(logits, y, weights).item()
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, acc


def _snapshot(model):
    return ([p.data.copy() for p in model.parameters()],
            [b.copy() for _, b in model.named_buffers()])


def _restore(model, snap):
    params, buffers = snap
    for p, d in zip(model.parameters(), params):
        p.data = d
    for (_, b), d in zip(model.named_buffers(), buffers):
        b[...] = d


def train(model, train_data, val_data, cfg=None, class_weights=None):
    """Fit ``model`` in place; returns ``(model, history)``.

    ``train_data``/``val_data`` are ``(x, y)`` pairs with ``x`` shaped
    (n, steps, channels). Class weights apply only when
    ``cfg.use_class_weights`` is set and ``class_weights`` is given.
    """
    cfg = cfg if cfg is not None else TrainConfig()
    x, y = np.asarray(train_data[0], dtype=np.float64), np.asarray(train_data[1], dtype=np.int64)
    xv, yv = np.asarray(val_data[0], dtype=np.float64), np.asarray(val_data[1], dtype=np.int64)
    if len(xv) == 0:
        raise ContractError("validation set is empty")
    if len(x) < 2:
        raise ContractError("training needs at least 2 samples")
    weights = class_weights if cfg.use_class_weights else None
    rng = np.random.default_rng(cfg.seed)
    params = dict(model.named_parameters())
    state = AdamState(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    history = TrainHistory()
    good = _snapshot(model)
    best_val, stale = np.inf, 0

    for epoch in range(1, int(cfg.epochs) + 1):
        t0 = time.perf_counter()
        loss_sum, correct = 0.0, 0
        try:
            for idx in epoch_batches(len(x), int(cfg.batch_size), rng):
                model.zero_grad()
                logits = model.forward(x[idx], training=True, rng=rng)
                loss = cross_entropy(logits, y[idx], weights)
                loss.backward()
                adam_step(params, {n: p.grad for n, p in params.items()}, state)
                loss_sum += loss.item() * len(idx)
                correct += int(np.sum(np.argmax(logits.data, axis=1) == y[idx]))
            val_loss, val_acc = evaluate_loss(model, xv, yv)
        except NumericError as exc:
            _restore(model, good)
            raise TrainingDiverged(
                f"training diverged in epoch {epoch}: {exc}", epoch - 1, history, good
            ) from exc
        rec = EpochRecord(epoch, loss_sum / len(x), correct / len(x), val_loss, val_acc,
                          time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
                 epoch, rec.train_loss, rec.train_acc, val_loss, val_acc)
        good = _snapshot(model)
        if cfg.early_stop_patience is not None:
            if val_loss < best_val:
                best_val, stale = val_loss, 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return model, history
