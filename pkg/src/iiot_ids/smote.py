"""SMOTE oversampling on 2-D feature matrices.

Every class smaller than the majority is topped up with points
``x + lam * (nn - x)``: ``x`` a random member of the class, ``nn`` one of its
``k`` nearest same-class neighbours, ``lam ~ U[0, 1)`` shared across
coordinates. Output rows are the original rows followed by synthetics grouped
by ascending class.
"""
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .kernels import knn_rows


@dataclass(frozen=True)
class SmoteConfig:
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"SMOTE k must be >= 1, got {self.k}")


def flatten_to_2d(x):
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"expected (n, steps, channels), got {x.shape}")
    return x.reshape(x.shape[0], x.shape[1] * x.shape[2])


def restore_3d(x2d, steps, channels):
    x2d = np.asarray(x2d)
    if x2d.ndim != 2 or x2d.shape[1] != steps * channels:
        raise DimensionError(f"cannot restore {x2d.shape} to (n, {steps}, {channels})")
    return x2d.reshape(x2d.shape[0], steps, channels)


def knn(points, query_index, k):
    """``k`` nearest rows to ``points[query_index]`` (itself excluded)."""
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    if k >= m or k < 1:
        raise ContractError(f"need 1 <= k < {m} points, got k={k}")
    return knn_rows(points, np.array([query_index]), k)[0]


def resample(x2d, y, cfg=None):
    """Oversample every minority class up to the majority count."""
    cfg = cfg if cfg is not None else SmoteConfig()
    x2d = np.asarray(x2d, dtype=np.float64)
    y = np.asarray(y)
    if x2d.ndim != 2 or len(x2d) != len(y):
        raise DimensionError(f"features {x2d.shape} and labels {y.shape} disagree")
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max()
    for c, n in zip(classes, counts):
        if n < target and n <= cfg.k:
            raise ConfigError(
                f"class {c} has {n} samples; SMOTE with k={cfg.k} needs more than {cfg.k}"
            )
    rng = np.random.default_rng(cfg.seed)
    new_x, new_y = [x2d], [y]
    for c, n in zip(classes, counts):
        need = int(target - n)
        if need == 0:
            continue
        members = x2d[y == c]
        base = rng.integers(0, n, size=need)
        slot = rng.integers(0, cfg.k, size=need)
        lam = rng.random(need)
        uniq, inverse = np.unique(base, return_inverse=True)
        neigh = knn_rows(members, uniq, cfg.k)
        nn = neigh[inverse, slot]
        x = members[base]
        new_x.append(x + lam[:, None] * (members[nn] - x))
        new_y.append(np.full(need, c, dtype=y.dtype))
    return np.concatenate(new_x, axis=0), np.concatenate(new_y)


def resample_3d(x, y, cfg=None):
    """Flatten, resample, and restore the original (steps, channels) layout."""
    x = np.asarray(x)
    _, steps, ch = x.shape
    x_res, y_res = resample(flatten_to_2d(x), y, cfg)
    return restore_3d(x_res, steps, ch), y_res


def histogram(y):
    return {int(k): int(v) for k, v in sorted(Counter(np.asarray(y).tolist()).items())}
