"""Neural building blocks: Conv1D, LSTM, batch norm, dropout, dense,
max-pooling, reshape helpers and scaled dot-product self-attention.

Functional forms (``*_forward``) operate on tensors directly; the
:class:`Module` subclasses own named parameters and call into them.
Sequence tensors are laid out ``(batch, steps, channels)``.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, as_tensor, make_op

ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": T.relu,
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# -- functional forms -------------------------------------------------------

def _same_padding(steps, width, stride):
    out = -(-steps // stride)
    total = max((out - 1) * stride + width - steps, 0)
    return total // 2, total - total // 2


def conv1d_forward(x, kernel, bias, stride=1, padding="valid"):
    """Sliding-window 1-D convolution (cross-correlation, as in Keras).

    kernel : (width, ch_in, ch_out); bias : (ch_out,).
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    if x.ndim != 3 or kernel.ndim != 3 or x.shape[2] != kernel.shape[1]:
        raise DimensionError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    if bias.shape != (kernel.shape[2],):
        raise DimensionError(f"conv1d: bias {bias.shape} does not match kernel {kernel.shape}")
    B, steps, cin = x.shape
    width, _, cout = kernel.shape
    if padding == "same":
        left, right = _same_padding(steps, width, stride)
    elif padding == "valid":
        left = right = 0
    else:
        raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")
    padded = steps + left + right
    if padded < width:
        raise DimensionError(
            f"conv1d: {steps} steps too short for kernel width {width} with {padding} padding"
        )
    out_steps = (padded - width) // stride + 1
    if left or right:
        xp = np.zeros((B, padded, cin))
        xp[:, left : left + steps] = x.data
    else:
        xp = x.data
    span = (out_steps - 1) * stride + 1
    cols = np.stack([xp[:, k : k + span : stride, :] for k in range(width)], axis=2)
    cols2d = cols.reshape(B * out_steps, width * cin)
    w2d = kernel.data.reshape(width * cin, cout)
    out = (cols2d @ w2d + bias.data).reshape(B, out_steps, cout)

    def backward(g):
        g2d = g.reshape(B * out_steps, cout)
        gk = (cols2d.T @ g2d).reshape(width, cin, cout)
        gb = g2d.sum(axis=0)
        dcols = (g2d @ w2d.T).reshape(B, out_steps, width, cin)
        dxp = np.zeros((B, padded, cin))
        for k in range(width):
            dxp[:, k : k + span : stride, :] += dcols[:, :, k, :]
        return dxp[:, left : left + steps, :], gk, gb

    return make_op(out, (x, kernel, bias), backward, "conv1d")


def lstm_forward(x, W, U, b):
    """Full hidden-state sequence of a single LSTM layer, zero initial state.

    W : (features, 4H), U : (H, 4H), b : (4H,), gates ordered i, f, g, o.
    """
    x, W, U, b = as_tensor(x), as_tensor(W), as_tensor(U), as_tensor(b)
    if x.ndim != 3 or W.ndim != 2 or x.shape[2] != W.shape[0]:
        raise DimensionError(f"lstm: input {x.shape} incompatible with kernel {W.shape}")
    H = U.shape[0]
    if W.shape[1] != 4 * H or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise DimensionError(
            f"lstm: inconsistent parameter shapes {W.shape}, {U.shape}, {b.shape}"
        )
    B, steps, F = x.shape
    x2d = x.data.reshape(B * steps, F)
    xp = np.ascontiguousarray((x2d @ W.data + b.data).reshape(B, steps, 4 * H).transpose(1, 0, 2))
    zeros = np.zeros((B, H))
    hs, cs, acts = kernels.lstm_sequence_forward(xp, np.ascontiguousarray(U.data), zeros, zeros)
    out = np.ascontiguousarray(hs.transpose(1, 0, 2))

    def backward(g):
        dhs = np.ascontiguousarray(g.transpose(1, 0, 2))
        dz, _, _ = kernels.lstm_sequence_backward(dhs, acts, cs, zeros, U.data)
        dz_bm = dz.transpose(1, 0, 2).reshape(B * steps, 4 * H)
        h_prev = np.concatenate([zeros[None], hs[:-1]], axis=0).reshape(steps * B, H)
        gU = h_prev.T @ dz.reshape(steps * B, 4 * H)
        return (dz_bm @ W.data.T).reshape(B, steps, F), x2d.T @ dz_bm, gU, dz_bm.sum(axis=0)

    return make_op(out, (x, W, U, b), backward, "lstm")


@dataclass(frozen=True)
class AttentionSpec:
    """Self-attention over time steps.

    In ``identity`` mode queries, keys and values are the layer input itself
    and ``d_q`` is the feature width. In ``learned`` mode the input is
    projected to width ``d_q`` for queries/keys; values keep the input width.
    """

    d_q: int
    projection_mode: str = "identity"

    def __post_init__(self):
        if self.d_q < 1:
            raise ConfigError(f"d_q must be positive, got {self.d_q}")
        if self.projection_mode not in ("identity", "learned"):
            raise ConfigError(f"unknown projection mode {self.projection_mode!r}")


def attention_forward(x, spec=None, wq=None, wk=None, wv=None, return_weights=False):
    """softmax(Q Kᵀ / sqrt(d_q)) V for every batch item."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"attention expects (batch, steps, d), got {x.shape}")
    d = x.shape[2]
    if spec is None:
        spec = AttentionSpec(d_q=d)
    if spec.projection_mode == "identity":
        if spec.d_q != d:
            raise DimensionError(f"identity attention needs d_q == {d}, got {spec.d_q}")
        q = k = v = x
    else:
        if wq is None or wk is None or wv is None:
            raise ContractError("learned attention needs wq, wk and wv")
        if as_tensor(wq).shape != (d, spec.d_q):
            raise DimensionError(f"wq shape {as_tensor(wq).shape} != {(d, spec.d_q)}")
        q, k, v = T.matmul(x, wq), T.matmul(x, wk), T.matmul(x, wv)
    scores = T.scale(T.bmm(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(spec.d_q))
    weights = T.softmax(scores, axis=-1)
    out = T.bmm(weights, v)
    return (out, weights) if return_weights else out


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training,
                      eps=1e-5, momentum=0.9):
    """Normalise over every axis except the last (the feature axis).

    In training mode ``running_mean``/``running_var`` (ndarrays) are updated
    in place: ``r = momentum * r + (1 - momentum) * batch_stat``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError(f"batchnorm: input {x.shape} vs gamma {gamma.shape}")
    axes = tuple(range(x.ndim - 1))
    if training:
        if x.shape[0] < 2:
            raise ContractError("batchnorm in training mode needs a batch of at least 2 samples")
        n = x.size // C
        mu = x.data.mean(axis=axes)
        centered = x.data - mu
        var = (centered * centered).mean(axis=axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var

        def backward(g):
            dxhat = g * gamma.data
            dx = (inv_std / n) * (
                n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
            )
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean) * inv_std

        def backward(g):
            return g * gamma.data * inv_std, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return make_op(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "batchnorm")


def dropout_mask(shape, rate, rng):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_forward(x, rate, training, rng=None, mask=None):
    """Inverted dropout. Pass ``mask`` to freeze the draw (gradient checks)."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if mask is None:
        if rng is None:
            raise ContractError("dropout in training mode needs an rng or a mask")
        mask = dropout_mask(x.shape, rate, rng)
    return T.mul(x, Tensor(mask))


def dense_forward(x, W, b, activation="linear"):
    return _activation(activation)(T.add_bias(T.matmul(x, W), b))


def maxpool1d_forward(x, pool=2):
    """Non-overlapping max pooling over steps; trailing steps are dropped."""
    x = as_tensor(x)
    B, steps, C = x.shape
    out_steps = steps // pool
    if out_steps < 1:
        raise DimensionError(f"maxpool: {steps} steps shorter than pool width {pool}")
    win = x.data[:, : out_steps * pool, :].reshape(B, out_steps, pool, C)
    arg = win.argmax(axis=2)
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(g):
        gw = np.zeros((B, out_steps, pool, C))
        np.put_along_axis(gw, arg[:, :, None, :], g[:, :, None, :], axis=2)
        full = np.zeros((B, steps, C))
        full[:, : out_steps * pool, :] = gw.reshape(B, out_steps * pool, C)
        return (full,)

    return make_op(out, (x,), backward, "maxpool1d")


def flatten(x):
    x = as_tensor(x)
    return T.reshape(x, (x.shape[0], x.size // x.shape[0]))


def last_step(x):
    return T.take(x, (slice(None), -1))


# -- modules ----------------------------------------------------------------

class Module:
    """Container of named parameters (trainable) and buffers (state)."""

    def __init__(self):
        self._params = {}
        self._buffers = {}
        self._children = {}

    def add_param(self, name, value):
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_buffer(self, name, value):
        self._buffers[name] = np.array(value, dtype=np.float64)

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix=""):
        for name in self._buffers:
            yield prefix + name, self._buffers[name]
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def __call__(self, x, training=False, rng=None):
        return self.forward(x, training=training, rng=rng)

    def __repr__(self):
        return type(self).__name__


class Conv1D(Module):
    def __init__(self, in_channels, filters, kernel_size=3, stride=1, padding="same",
                 activation="relu", rng=None):
        super().__init__()
        if kernel_size < 1 or stride < 1:
            raise ConfigError("kernel_size and stride must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding, self.activation = stride, padding, activation
        self.kernel = self.add_param(
            "kernel",
            glorot_uniform(rng, (kernel_size, in_channels, filters),
                           kernel_size * in_channels, kernel_size * filters),
        )
        self.bias = self.add_param("bias", np.zeros(filters))

    def forward(self, x, training=False, rng=None):
        y = conv1d_forward(x, self.kernel, self.bias, self.stride, self.padding)
        return _activation(self.activation)(y)


@dataclass
class LstmParams:
    """Per-gate views of a packed LSTM parameter set."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    GATES = ("input", "forget", "cell", "output")

    @property
    def hidden(self):
        return self.U.shape[0]

    def gate(self, name):
        H = self.hidden
        j = self.GATES.index(name)
        sl = slice(j * H, (j + 1) * H)
        return self.W[:, sl], self.U[:, sl], self.b[sl]


class LSTM(Module):
    def __init__(self, in_features, units, forget_bias=1.0, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.units = units
        self.W = self.add_param(
            "kernel", glorot_uniform(rng, (in_features, 4 * units), in_features, 4 * units)
        )
        self.U = self.add_param(
            "recurrent_kernel", glorot_uniform(rng, (units, 4 * units), units, 4 * units)
        )
        b = np.zeros(4 * units)
        b[units : 2 * units] = forget_bias
        self.b = self.add_param("bias", b)

    @property
    def params(self):
        return LstmParams(self.W.data, self.U.data, self.b.data)

    def forward(self, x, training=False, rng=None):
        return lstm_forward(x, self.W, self.U, self.b)


class BatchNorm(Module):
    def __init__(self, features, eps=1e-5, momentum=0.9):
        super().__init__()
        if eps <= 0:
            raise ConfigError("batchnorm epsilon must be positive")
        self.eps, self.momentum = eps, momentum
        self.gamma = self.add_param("gamma", np.ones(features))
        self.beta = self.add_param("beta", np.zeros(features))
        self.add_buffer("running_mean", np.zeros(features))
        self.add_buffer("running_var", np.ones(features))

    def forward(self, x, training=False, rng=None):
        return batchnorm_forward(
            x, self.gamma, self.beta, self._buffers["running_mean"],
            self._buffers["running_var"], training, self.eps, self.momentum,
        )


class Dropout(Module):
    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        return dropout_forward(x, self.rate, training, rng)


class Dense(Module):
    def __init__(self, in_features, units, activation="linear", rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        _activation(activation)
        self.activation = activation
        self.W = self.add_param("kernel", glorot_uniform(rng, (in_features, units), in_features, units))
        self.b = self.add_param("bias", np.zeros(units))

    def forward(self, x, training=False, rng=None):
        return dense_forward(x, self.W, self.b, self.activation)


class Attention(Module):
    def __init__(self, features, projection_mode="identity", d_q=None, rng=None):
        super().__init__()
        d_q = features if d_q is None or projection_mode == "identity" else d_q
        self.spec = AttentionSpec(d_q=d_q, projection_mode=projection_mode)
        self.wq = self.wk = self.wv = None
        if projection_mode == "learned":
            rng = rng if rng is not None else np.random.default_rng(0)
            self.wq = self.add_param("query", glorot_uniform(rng, (features, d_q), features, d_q))
            self.wk = self.add_param("key", glorot_uniform(rng, (features, d_q), features, d_q))
            self.wv = self.add_param(
                "value", glorot_uniform(rng, (features, features), features, features)
            )

    def forward(self, x, training=False, rng=None):
        return attention_forward(x, self.spec, self.wq, self.wk, self.wv)


class MaxPool1D(Module):
    def __init__(self, pool=2):
        super().__init__()
        if pool < 1:
            raise ConfigError("pool width must be >= 1")
        self.pool = pool

    def forward(self, x, training=False, rng=None):
        return maxpool1d_forward(x, self.pool)


class Flatten(Module):
    def forward(self, x, training=False, rng=None):
        return flatten(x)


class LastStep(Module):
    def forward(self, x, training=False, rng=None):
        return last_step(x)


class Sequential(Module):
    def __init__(self, layers=()):
        super().__init__()
        self.layers = []
        for name, layer in layers:
            self.append(name, layer)

    def append(self, name, layer):
        self.add_child(name, layer)
        self.layers.append(layer)

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer(x, training=training, rng=rng)
        return x


class Parallel(Module):
    """Run named branches on the same input and concatenate their outputs."""

    def __init__(self, branches):
        super().__init__()
        self.branches = []
        for name, branch in branches:
            self.add_child(name, branch)
            self.branches.append(branch)

    def forward(self, x, training=False, rng=None):
        return T.concatenate([b(x, training=training, rng=rng) for b in self.branches], axis=-1)


def reshape(x, new_shape):
    return T.reshape(x, new_shape)


def concatenate(xs, axis=-1):
    return T.concatenate(xs, axis)
