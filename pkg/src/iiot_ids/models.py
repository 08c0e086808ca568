"""The nine architecture variants and the checkpoint container.

Variants #1-#3 are single-family (CNN or LSTM), #4-#7 stack LSTM then CNN
serially, and #8-#9 run a CNN branch and an LSTM branch in parallel and
concatenate them before the dense head. #9 is the flagship.
"""
from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import os
import struct

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import CheckpointError, ConfigError, DimensionError

NUM_CLASSES = (2, 6)

# id: (name, plan, cnn_attention, lstm_attention, dense_layers, dropout, maxpool)
CATALOG = {
    1: ("CNN", "cnn", False, False, 2, False, False),
    2: ("LSTM", "lstm", False, False, 2, False, False),
    3: ("LSTM-Atten.", "lstm", False, True, 2, False, False),
    4: ("LSTM-CNN with 2 Dense layers", "serial", False, False, 2, False, False),
    5: ("LSTM-CNN-Atten. with 2 Dense layers", "serial", True, False, 2, False, False),
    6: ("LSTM-CNN-Attention with 3 Dense layers", "serial", True, False, 3, False, False),
    7: ("LSTM-CNN-Atten. with MaxPooling", "serial", True, False, 2, False, True),
    8: ("(LSTM-CNN)-Atten.", "parallel", True, True, 2, False, False),
    9: ("(LSTM-CNN)-Atten. added a DropOut layer", "parallel", True, True, 2, True, False),
}
FLAGSHIP = 9


@dataclass(frozen=True)
class Hyperparams:
    conv_filters: tuple = (64, 128)
    kernel_size: int = 3
    lstm_units: tuple = (64, 64)
    dropout_rate: float = 0.3
    dense_units: int = 128
    pool_size: int = 2
    attention_mode: str = "identity"
    attention_dq: int = 0  # 0 -> feature width
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(f) for f in self.conv_filters))
        object.__setattr__(self, "lstm_units", tuple(int(u) for u in self.lstm_units))
        if len(self.conv_filters) != 2 or len(self.lstm_units) != 2:
            raise ConfigError("conv_filters and lstm_units need exactly two entries")
        if min(self.conv_filters + self.lstm_units) < 1 or self.dense_units < 1:
            raise ConfigError("layer widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.attention_mode not in ("identity", "learned"):
            raise ConfigError(f"unknown attention_mode {self.attention_mode!r}")


@dataclass(frozen=True)
class VariantSpec:
    id: int
    name: str
    plan: str
    cnn_attention: bool
    lstm_attention: bool
    dense_layers: int
    dropout: bool
    maxpool: bool
    num_classes: int
    steps: int
    channels: int
    hyper: Hyperparams = field(default_factory=Hyperparams)

    @property
    def input_shape(self):
        return (self.steps, self.channels)

    @property
    def has_lstm(self):
        return self.plan != "cnn"

    @property
    def has_conv(self):
        return self.plan != "lstm"

    def to_dict(self):
        d = asdict(self)
        d["hyper"]["conv_filters"] = list(self.hyper.conv_filters)
        d["hyper"]["lstm_units"] = list(self.hyper.lstm_units)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        hyper = Hyperparams(**d.pop("hyper", {}))
        return variant_spec(d["id"], d["num_classes"], d["steps"], d["channels"], hyper)


def variant_spec(variant_id, num_classes=6, steps=60, channels=1, hyper=None, **overrides):
    """Look up a catalog row and bind it to an input shape and output width."""
    if variant_id not in CATALOG:
        raise ConfigError(f"unknown variant {variant_id!r}; valid ids are {sorted(CATALOG)}")
    if num_classes not in NUM_CLASSES:
        raise ConfigError(f"num_classes must be one of {NUM_CLASSES}, got {num_classes}")
    if steps < 1 or channels < 1:
        raise ConfigError(f"invalid input shape ({steps}, {channels})")
    hyper = hyper if hyper is not None else Hyperparams()
    if overrides:
        hyper = replace(hyper, **overrides)
    name, plan, cnn_att, lstm_att, dense, dropout, maxpool = CATALOG[variant_id]
    return VariantSpec(variant_id, name, plan, cnn_att, lstm_att, dense, dropout, maxpool,
                       num_classes, steps, channels, hyper)


class Model(L.Module):
    """Feature extractor (sequential or two-branch) followed by a dense head."""

    def __init__(self, spec, features, head):
        super().__init__()
        self.spec = spec
        self.features = self.add_child("features", features)
        self.head = self.add_child("head", head)
        self.preprocessing = None
        self.seed = None

    @property
    def variant_id(self):
        return self.spec.id

    def forward(self, x, training=False, rng=None):
        x = T.as_tensor(x)
        if x.ndim != 3 or x.shape[1:] != self.spec.input_shape:
            raise DimensionError(
                f"variant #{self.spec.id} expects (batch, {self.spec.steps}, "
                f"{self.spec.channels}), got {x.shape}"
            )
        return self.head(self.features(x, training, rng), training, rng)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return int(sum(p.size for p in self.parameters()))

    def layer_types(self):
        return [type(m).__name__ for m in self.modules()]

    def logits(self, x, batch_size=1024):
        """Inference-mode logits without graph recording."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        with T.no_grad():
            for start in range(0, len(x), batch_size):
                out.append(self.forward(x[start : start + batch_size]).data)
        return np.concatenate(out, axis=0)

    def predict_proba(self, x, batch_size=1024):
        z = self.logits(x, batch_size)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _cnn_block(spec, in_ch, steps, rng, flatten):
    h = spec.hyper
    f1, f2 = h.conv_filters
    seq = L.Sequential([
        ("conv1", L.Conv1D(in_ch, f1, h.kernel_size, padding="same", activation="relu", rng=rng)),
        ("conv2", L.Conv1D(f1, f2, h.kernel_size, padding="same", activation="relu", rng=rng)),
    ])
    if spec.maxpool:
        seq.append("maxpool", L.MaxPool1D(h.pool_size))
        steps //= h.pool_size
        if steps < 1:
            raise ConfigError(f"pool size {h.pool_size} leaves no steps")
    seq.append("batchnorm", L.BatchNorm(f2, h.bn_eps, h.bn_momentum))
    if spec.dropout:
        seq.append("dropout", L.Dropout(h.dropout_rate))
    if spec.cnn_attention:
        seq.append("attention", L.Attention(f2, h.attention_mode, h.attention_dq or None, rng))
    if flatten:
        seq.append("reshape", L.Flatten())
    return seq, steps * f2


def _lstm_block(spec, in_ch, rng, take_last):
    h = spec.hyper
    u1, u2 = h.lstm_units
    seq = L.Sequential([
        ("lstm1", L.LSTM(in_ch, u1, rng=rng)),
        ("lstm2", L.LSTM(u1, u2, rng=rng)),
        ("batchnorm", L.BatchNorm(u2, h.bn_eps, h.bn_momentum)),
    ])
    if spec.lstm_attention:
        seq.append("attention", L.Attention(u2, h.attention_mode, h.attention_dq or None, rng))
    if take_last:
        seq.append("last_step", L.LastStep())
    return seq, u2


def build_variant(spec, seed=0):
    """Instantiate a :class:`Model` for ``spec`` with seeded Glorot init."""
    if isinstance(spec, int):
        spec = variant_spec(spec)
    rng = np.random.default_rng(seed)
    steps, ch = spec.steps, spec.channels
    if spec.plan == "cnn":
        features, width = _cnn_block(spec, ch, steps, rng, flatten=True)
    elif spec.plan == "lstm":
        features, width = _lstm_block(spec, ch, rng, take_last=True)
    elif spec.plan == "serial":
        lstm_part, units = _lstm_block(spec, ch, rng, take_last=False)
        cnn_part, width = _cnn_block(spec, units, steps, rng, flatten=True)
        features = L.Sequential([("lstm", lstm_part), ("cnn", cnn_part)])
    elif spec.plan == "parallel":
        cnn_part, w_cnn = _cnn_block(spec, ch, steps, rng, flatten=True)
        lstm_part, w_lstm = _lstm_block(spec, ch, rng, take_last=True)
        features = L.Parallel([("cnn", cnn_part), ("lstm", lstm_part)])
        width = w_cnn + w_lstm
    else:  # pragma: no cover - catalog is closed
        raise ConfigError(f"unknown plan {spec.plan!r}")

    hidden = [spec.hyper.dense_units]
    if spec.dense_layers == 3:
        hidden.append(max(1, spec.hyper.dense_units // 2))
    head = L.Sequential()
    for i, units in enumerate(hidden, start=1):
        head.append(f"dense{i}", L.Dense(width, units, activation="relu", rng=rng))
        width = units
    head.append("output", L.Dense(width, spec.num_classes, activation="linear", rng=rng))
    model = Model(spec, features, head)
    model.seed = seed
    return model


def forward(model, batch, mode="infer", rng=None):
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer":
        with T.no_grad():
            return model.forward(batch, training=False)
    return model.forward(batch, training=True, rng=rng)


# -- checkpoints ------------------------------------------------------------

MAGIC = b"IIOTIDS\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


@dataclass
class CheckpointBundle:
    variant_id: int
    spec: dict
    entries: list  # [(name, kind, ndarray)] in payload order
    preprocessing: dict = None
    seed: int = None
    version: int = FORMAT_VERSION


def model_state(model):
    entries = [(n, "param", p.data) for n, p in model.named_parameters()]
    entries += [(n, "buffer", b) for n, b in model.named_buffers()]
    return entries


def write_bundle(bundle, path):
    arrays = [np.ascontiguousarray(a, dtype="<f8") for _, _, a in bundle.entries]
    payload = b"".join(a.tobytes() for a in arrays)
    meta = {
        "spec": bundle.spec,
        "entries": [
            {"name": n, "kind": k, "shape": list(a.shape)}
            for (n, k, _), a in zip(bundle.entries, arrays)
        ],
        "preprocessing": bundle.preprocessing,
        "seed": bundle.seed,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    header = _HEADER.pack(MAGIC, bundle.version, bundle.variant_id, len(meta_bytes))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header + meta_bytes + payload)
    os.replace(tmp, path)


def read_bundle(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, variant_id, meta_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = _HEADER.size
    if len(raw) < start + meta_len:
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[start : start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata") from exc
    payload = raw[start + meta_len :]
    if len(payload) != meta["payload_bytes"]:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, expected {meta['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != meta["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    entries, offset = [], 0
    for e in meta["entries"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).astype(np.float64)
        entries.append((e["name"], e["kind"], arr.reshape(e["shape"])))
        offset += 8 * n
    return CheckpointBundle(variant_id, meta["spec"], entries, meta["preprocessing"],
                            meta["seed"], version)


def save(model, path, preprocessing=None):
    bundle = CheckpointBundle(
        model.spec.id, model.spec.to_dict(), model_state(model),
        preprocessing if preprocessing is not None else model.preprocessing, model.seed,
    )
    write_bundle(bundle, path)
    return bundle


def load(path, expect_variant=None):
    """Rebuild the model stored at ``path``; nothing is returned on failure."""
    bundle = read_bundle(path)
    if expect_variant is not None and bundle.variant_id != expect_variant:
        raise CheckpointError(
            f"{path}: checkpoint holds variant #{bundle.variant_id}, expected #{expect_variant}"
        )
    try:
        spec = VariantSpec.from_dict(bundle.spec)
    except (ConfigError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: invalid variant description: {exc}") from exc
    if spec.id != bundle.variant_id:
        raise CheckpointError(f"{path}: header variant #{bundle.variant_id} != spec #{spec.id}")
    model = build_variant(spec, seed=0)
    expected = [(n, k, a.shape) for n, k, a in model_state(model)]
    found = [(n, k, a.shape) for n, k, a in bundle.entries]
    if expected != found:
        raise CheckpointError(f"{path}: parameter layout does not match variant #{spec.id}")
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for name, kind, arr in bundle.entries:
        if kind == "param":
            params[name].data = arr.copy()
        else:
            buffers[name][...] = arr
    model.preprocessing = bundle.preprocessing
    model.seed = bundle.seed
    return model
