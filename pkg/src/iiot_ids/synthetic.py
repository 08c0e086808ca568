"""Seeded Gaussian-blob datasets shaped like the preprocessed traffic CSV."""
import json

import numpy as np

from .data import SIX_CLASS_MAP, DatasetSchema, Dataset, export_csv

ATTACKS_BY_CLASS = {}
for _name, _code in SIX_CLASS_MAP.items():
    ATTACKS_BY_CLASS.setdefault(_code, []).append(_name)


def class_means(n_classes, n_features, margin, sigma=1.0, rng=None):
    """Means whose pairwise distance is ``2 * margin * sigma``.

    The means sit on scaled orthogonal directions (randomly rotated), so the
    distance from every mean to each pairwise bisecting hyperplane is exactly
    ``margin * sigma``.
    """
    if n_features < n_classes:
        raise ValueError("need at least as many features as classes")
    rng = rng if rng is not None else np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(n_features, n_features)))
    return np.sqrt(2.0) * margin * sigma * q[:, :n_classes].T


def make_blobs(n_samples=3000, n_features=60, n_classes=6, margin=4.0, sigma=1.0,
               proportions=None, seed=0):
    """Return ``(x, y)`` with isotropic Gaussian classes.

    ``proportions`` sets class priors; counts are rounded and the remainder
    goes to class 0.
    """
    rng = np.random.default_rng(seed)
    means = class_means(n_classes, n_features, margin, sigma, rng)
    p = np.full(n_classes, 1.0 / n_classes) if proportions is None else np.asarray(proportions)
    counts = np.floor(p / p.sum() * n_samples).astype(int)
    counts[0] += n_samples - counts.sum()
    y = np.repeat(np.arange(n_classes), counts)
    x = means[y] + sigma * rng.normal(size=(n_samples, n_features))
    perm = rng.permutation(n_samples)
    return x[perm], y[perm]


def attack_names(y, task, seed=0):
    """Map integer classes to plausible attack-type strings."""
    rng = np.random.default_rng(seed)
    out = []
    for c in np.asarray(y):
        if c == 0:
            out.append("Normal")
            continue
        pool = ATTACKS_BY_CLASS[int(c)] if task == "multiclass" else [
            a for a in SIX_CLASS_MAP if a != "Normal"
        ]
        out.append(pool[rng.integers(len(pool))])
    return out


def write_synthetic(csv_path, schema_path, n_samples=600, n_features=12, task="multiclass",
                    margin=4.0, proportions=None, seed=0):
    """Write a synthetic CSV plus matching schema JSON; returns the Dataset."""
    n_classes = 6 if task == "multiclass" else 2
    x, y = make_blobs(n_samples, n_features, n_classes, margin, proportions=proportions,
                      seed=seed)
    names = [f"f{i:02d}" for i in range(n_features)]
    ds = Dataset(x, attack_names(y, task, seed), names)
    schema = DatasetSchema(attack_type_column="Attack_type", feature_columns=names,
                           expected_feature_count=n_features)
    export_csv(ds, csv_path, schema)
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ds
