"""CSV ingestion, label construction, splitting and feature scaling."""
from dataclasses import dataclass, field
import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, MappingError

NORMAL = "Normal"

SIX_CLASS_NAMES = ("Normal", "DDoS", "Info_gathering", "MITM", "Injection", "Malware")
BINARY_CLASS_NAMES = ("Normal", "Attack")

# attack-type strings as spelled in Edge-IIoTset
SIX_CLASS_MAP = {
    "Normal": 0,
    "DDoS_UDP": 1,
    "DDoS_ICMP": 1,
    "DDoS_TCP": 1,
    "DDoS_HTTP": 1,
    "Port_Scanning": 2,
    "Fingerprinting": 2,
    "Vulnerability_scanner": 2,
    "MITM": 3,
    "SQL_injection": 4,
    "XSS": 4,
    "Uploading": 4,
    "Backdoor": 5,
    "Password": 5,
    "Ransomware": 5,
}


@dataclass
class DatasetSchema:
    """Which CSV columns are features and which carry labels.

    An empty ``feature_columns`` list means every column except the label
    columns. ``categorical_columns`` are label-encoded rather than parsed.
    """

    attack_type_column: str
    label_column: str = None
    feature_columns: list = field(default_factory=list)
    categorical_columns: list = field(default_factory=list)
    expected_feature_count: int = None

    def __post_init__(self):
        cols = list(self.feature_columns)
        if len(set(cols)) != len(cols):
            raise DataError("duplicate feature column names in schema")
        label_cols = {self.attack_type_column, self.label_column} - {None}
        if label_cols & set(cols):
            raise DataError(f"label columns {sorted(label_cols & set(cols))} listed as features")

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"schema file not found: {path}")
        except json.JSONDecodeError as exc:
            raise DataError(f"schema {path} is not valid JSON: {exc}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise DataError(f"bad schema {path}: {exc}")

    def to_dict(self):
        return {
            "attack_type_column": self.attack_type_column,
            "label_column": self.label_column,
            "feature_columns": list(self.feature_columns),
            "categorical_columns": list(self.categorical_columns),
            "expected_feature_count": self.expected_feature_count,
        }


@dataclass
class Dataset:
    features: np.ndarray
    attack_types: list
    feature_names: list
    source: str = None
    rows_read: int = 0
    rows_dropped: int = 0
    categorical_maps: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.features)

    def labels(self, task):
        """Integer labels and class names for ``binary`` or ``multiclass``."""
        if task == "binary":
            return np.array([to_binary(a) for a in self.attack_types]), list(BINARY_CLASS_NAMES)
        if task == "multiclass":
            return np.array([to_six_class(a) for a in self.attack_types]), list(SIX_CLASS_NAMES)
        raise ContractError(f"task must be 'binary' or 'multiclass', got {task!r}")

    def subset(self, idx):
        return Dataset(self.features[idx], [self.attack_types[i] for i in idx],
                       list(self.feature_names), self.source, len(idx), 0,
                       dict(self.categorical_maps))


def encode_labels(values):
    """Sorted-order integer codes: returns ``(codes, {name: code})``."""
    values = list(values)
    if not values:
        raise ContractError("encode_labels needs at least one value")
    mapping = {v: i for i, v in enumerate(sorted(set(values)))}
    return np.array([mapping[v] for v in values], dtype=np.int64), mapping


def to_binary(attack_type):
    if attack_type is None or str(attack_type).strip() == "":
        raise DataError("empty attack type")
    return 0 if str(attack_type).strip() == NORMAL else 1


def to_six_class(attack_type):
    key = "" if attack_type is None else str(attack_type).strip()
    if not key:
        raise DataError("empty attack type")
    try:
        return SIX_CLASS_MAP[key]
    except KeyError:
        raise MappingError(
            f"unknown attack type {key!r}; known types: {', '.join(sorted(SIX_CLASS_MAP))}"
        )


def load_csv(path, schema):
    """Read a comma-separated file into a :class:`Dataset`.

    Rows with an unparseable numeric feature or a missing attack type are
    dropped and counted in ``rows_dropped``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty")
        rows = list(reader)

    required = [schema.attack_type_column] + list(schema.feature_columns)
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing required columns {missing}")
    label_cols = {schema.attack_type_column, schema.label_column}
    feature_names = list(schema.feature_columns) or [h for h in header if h not in label_cols]
    if schema.expected_feature_count is not None and len(feature_names) != schema.expected_feature_count:
        raise DataError(
            f"{path}: {len(feature_names)} feature columns, schema expects "
            f"{schema.expected_feature_count}"
        )
    col = {h: i for i, h in enumerate(header)}
    fidx = [col[c] for c in feature_names]
    categorical = set(schema.categorical_columns)
    aidx = col[schema.attack_type_column]

    kept_rows, attack_types, dropped = [], [], 0
    for row in rows:
        if len(row) != len(header):
            dropped += 1
            continue
        atype = row[aidx].strip()
        if not atype:
            dropped += 1
            continue
        values = []
        for name, j in zip(feature_names, fidx):
            cell = row[j].strip()
            if name in categorical:
                values.append(cell)
                continue
            try:
                v = float(cell)
            except ValueError:
                break
            if not math.isfinite(v):
                break
            values.append(v)
        else:
            kept_rows.append(values)
            attack_types.append(atype)
            continue
        dropped += 1
    if not kept_rows:
        raise DataError(f"{path}: no usable rows ({dropped} dropped)")

    cat_maps = {}
    for j, name in enumerate(feature_names):
        if name in categorical:
            codes, mapping = encode_labels([r[j] for r in kept_rows])
            cat_maps[name] = mapping
            for r, c in zip(kept_rows, codes):
                r[j] = float(c)
    features = np.array(kept_rows, dtype=np.float64).reshape(len(kept_rows), len(feature_names))
    return Dataset(features, attack_types, feature_names, str(path), len(rows), dropped, cat_maps)


def export_csv(ds, path, schema=None):
    """Write ``ds`` back out in the same layout :func:`load_csv` reads."""
    attack_col = schema.attack_type_column if schema else "Attack_type"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + [attack_col])
        for row, a in zip(ds.features, ds.attack_types):
            w.writerow([repr(float(v)) for v in row] + [a])


def split_indices(labels, ratio=0.8, seed=0, stratified=True):
    """Disjoint, exhaustive train/test index arrays (each sorted)."""
    labels = np.asarray(labels)
    n = len(labels)
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n)
        cut = int(math.floor(ratio * n + 0.5))
        return np.sort(perm[:cut]), np.sort(perm[cut:])
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise DataError(f"class {c} has {len(idx)} sample(s); stratified split needs >= 2")
        idx = rng.permutation(idx)
        cut = min(max(int(math.floor(ratio * len(idx) + 0.5)), 1), len(idx) - 1)
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(ds, labels, ratio=0.8, seed=0, stratified=True):
    tr, te = split_indices(labels, ratio, seed, stratified)
    return ds.subset(tr), ds.subset(te), tr, te


@dataclass
class ScalerStats:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["scale"], dtype=np.float64))


def fit_scaler(train):
    train = np.asarray(train, dtype=np.float64)
    if len(train) == 0:
        raise ContractError("cannot fit a scaler on an empty training set")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    # near-constant features are only centred
    scale = np.where(std < 1e-12, 1.0, std)
    return ScalerStats(mean, scale)


def standardize(train, test):
    stats = fit_scaler(train)
    return stats.apply(train), stats.apply(test), stats


def class_weights(labels, num_classes=None):
    """Balanced inverse-frequency weights ``n / (k * n_c)``."""
    labels = np.asarray(labels, dtype=np.int64)
    k = int(num_classes if num_classes is not None else labels.max() + 1)
    counts = np.bincount(labels, minlength=k)[:k]
    if (counts == 0).any():
        raise DataError(f"classes {np.flatnonzero(counts == 0).tolist()} have no samples")
    return len(labels) / (k * counts.astype(np.float64))


def to_sequence(features, channels=1):
    """(n, f) -> (n, f // channels, channels), row-major."""
    features = np.asarray(features)
    n, f = features.shape
    if channels < 1 or f % channels:
        raise ContractError(f"{f} features cannot be split into channels of width {channels}")
    return features.reshape(n, f // channels, channels)


def from_sequence(x):
    x = np.asarray(x)
    return x.reshape(x.shape[0], -1)
