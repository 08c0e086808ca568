"""Confusion matrices, classification reports and ROC curves.

Rates with a zero denominator are reported as 0 and listed in the report's
``undefined`` field instead of propagating NaN.
"""
from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np

from .errors import ContractError, UndefinedMetricError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return self.counts.sum(axis=1)

    def percentages(self):
        """Row-normalised percentages; rows without support stay at zero."""
        rows = self.support.astype(np.float64)[:, None]
        out = np.zeros(self.counts.shape)
        np.divide(100.0 * self.counts, rows, out=out, where=rows > 0)
        return out

    def to_csv(self, path, percent=False):
        values = self.percentages() if percent else self.counts
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *self.class_names])
            for name, row in zip(self.class_names, values):
                w.writerow([name, *(repr(float(v)) if percent else int(v) for v in row)])


def _default_names(k):
    return tuple(str(i) for i in range(k))


def _labels(y, k, what):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ContractError(f"{what} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ContractError(f"{what} must hold integer class labels")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ContractError(f"{what} has labels outside [0, {k}): [{y.min()}, {y.max()}]")
    return y


def confusion(y_true, y_pred, k, class_names=None):
    if k < 1:
        raise ContractError(f"need at least one class, got k={k}")
    t = _labels(y_true, k, "y_true")
    p = _labels(y_pred, k, "y_pred")
    if t.shape != p.shape:
        raise ContractError(f"y_true {t.shape} and y_pred {p.shape} differ in length")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    names = _default_names(k) if class_names is None else tuple(class_names)
    if len(names) != k:
        raise ContractError(f"{len(names)} class names for {k} classes")
    return ConfusionMatrix(counts, names)


def predict(scores):
    """Arg-max class per row; ties go to the lower class index."""
    return np.argmax(np.asarray(scores), axis=1)


def _ratio(num, den, label, undefined):
    if den == 0:
        undefined.append(label)
        return 0.0
    return num / den


def _f1(pr, rc):
    return 0.0 if pr + rc == 0 else 2.0 * pr * rc / (pr + rc)


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    undefined: tuple = ()

    def as_tuple(self):
        return self.accuracy, self.precision, self.recall, self.f1, self.fpr


def binary_metrics(cm):
    """Accuracy, precision, recall, F1 and FPR with class 1 (attack) positive."""
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if counts.shape != (2, 2):
        raise ContractError(f"binary metrics need a 2x2 matrix, got {counts.shape}")
    (tn, fp), (fn, tp) = counts.tolist()
    undefined = []
    acc = _ratio(tp + tn, tp + tn + fp + fn, "accuracy", undefined)
    pr = _ratio(tp, tp + fp, "precision", undefined)
    rc = _ratio(tp, tp + fn, "recall", undefined)
    if pr + rc == 0:
        undefined.append("f1")
    fpr = _ratio(fp, fp + tn, "fpr", undefined)
    return BinaryMetrics(acc, pr, rc, _f1(pr, rc), fpr, tuple(undefined))


# -- ROC ------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    """Points for thresholds over the distinct scores, descending.

    The first point (threshold ``inf``) is (0, 0); the last is (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_dict(self):
        return {
            "thresholds": [float(t) if math.isfinite(t) else "inf" for t in self.thresholds],
            "fpr": [float(v) for v in self.fpr],
            "tpr": [float(v) for v in self.tpr],
            "auc": float(self.auc),
        }

    @classmethod
    def from_dict(cls, d):
        th = np.array([math.inf if t == "inf" else float(t) for t in d["thresholds"]])
        return cls(th, np.array(d["fpr"], dtype=np.float64), np.array(d["tpr"], dtype=np.float64),
                   float(d["auc"]))


def roc_curve(scores, y_true):
    """ROC of a positive-class score against binary labels, AUC by trapezoid."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y_true)
    if s.ndim != 1 or s.shape != y.shape:
        raise ContractError(f"scores {s.shape} and labels {y.shape} must be matching 1-D arrays")
    if not np.isfinite(s).all():
        raise ContractError("scores must be finite")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(len(y) - n_pos)
    if not np.all((y == 0) | pos):
        raise ContractError("y_true must be binary (0/1)")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC undefined with {n_pos} positive and {n_neg} negative samples"
        )
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order]
    # the last index of each run of equal scores closes one threshold
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
    tp = np.cumsum(pos_sorted)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s_sorted[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc)


def one_vs_rest_roc(proba, y_true):
    """Per-class ROC on probability columns; classes absent or total map to None."""
    proba = np.asarray(proba, dtype=np.float64)
    y = np.asarray(y_true)
    out = {}
    for c in range(proba.shape[1]):
        try:
            out[c] = roc_curve(proba[:, c], (y == c).astype(np.int64))
        except UndefinedMetricError:
            out[c] = None
    return out


# -- multiclass report ----------------------------------------------------------

@dataclass
class MetricsReport:
    class_names: tuple
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    fpr: np.ndarray
    accuracy: float
    macro: dict
    weighted: dict
    fpr_aggregate: float
    fpr_average: str
    total: int
    confusion: np.ndarray
    undefined: list = field(default_factory=list)
    roc: dict = field(default_factory=dict)
    loss: float = None

    @property
    def auc(self):
        return {c: (r.auc if r is not None else None) for c, r in self.roc.items()}

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "class_names": list(self.class_names),
            "per_class": [
                {
                    "class": i,
                    "name": name,
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "fpr": float(self.fpr[i]),
                    "support": int(self.support[i]),
                }
                for i, name in enumerate(self.class_names)
            ],
            "accuracy": float(self.accuracy),
            "macro_avg": {k: float(v) for k, v in self.macro.items()},
            "weighted_avg": {k: float(v) for k, v in self.weighted.items()},
            "fpr_aggregate": float(self.fpr_aggregate),
            "fpr_average": self.fpr_average,
            "total": int(self.total),
            "confusion": self.confusion.astype(int).tolist(),
            "undefined": list(self.undefined),
            "roc": {str(c): (r.to_dict() if r is not None else None) for c, r in self.roc.items()},
            "loss": None if self.loss is None else float(self.loss),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ContractError(f"unsupported report schema version {d.get('schema_version')!r}")
        rows = d["per_class"]

        def col(key, dtype=np.float64):
            return np.array([r[key] for r in rows], dtype=dtype)

        return cls(
            class_names=tuple(d["class_names"]),
            precision=col("precision"),
            recall=col("recall"),
            f1=col("f1"),
            support=col("support", np.int64),
            fpr=col("fpr"),
            accuracy=d["accuracy"],
            macro=dict(d["macro_avg"]),
            weighted=dict(d["weighted_avg"]),
            fpr_aggregate=d["fpr_aggregate"],
            fpr_average=d["fpr_average"],
            total=d["total"],
            confusion=np.array(d["confusion"], dtype=np.int64),
            undefined=list(d["undefined"]),
            roc={int(c): (RocCurve.from_dict(r) if r is not None else None)
                 for c, r in d["roc"].items()},
            loss=d.get("loss"),
        )


def multiclass_report(cm, fpr_average="macro", roc=None, loss=None):
    """Per-class one-vs-rest metrics plus macro/weighted averages.

    ``fpr_average`` selects the aggregate FPR: ``macro`` (mean of per-class
    FPRs) or ``micro`` (pooled FP over pooled FP + TN).
    """
    if fpr_average not in ("macro", "micro"):
        raise ContractError(f"fpr_average must be 'macro' or 'micro', got {fpr_average!r}")
    counts = cm.counts
    k = cm.k
    if k < 2:
        raise ContractError("a classification report needs at least two classes")
    total = cm.total
    tp = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    fp = predicted - tp
    fn = support - tp
    tn = total - tp - fp - fn
    undefined = []
    pr = np.array([_ratio(tp[c], tp[c] + fp[c], f"precision[{c}]", undefined) for c in range(k)])
    rc = np.array([_ratio(tp[c], tp[c] + fn[c], f"recall[{c}]", undefined) for c in range(k)])
    f1 = np.array([_f1(pr[c], rc[c]) for c in range(k)])
    fpr = np.array([_ratio(fp[c], fp[c] + tn[c], f"fpr[{c}]", undefined) for c in range(k)])
    acc = _ratio(tp.sum(), total, "accuracy", undefined)
    w = support / total if total else np.zeros(k)
    macro = {"precision": pr.mean(), "recall": rc.mean(), "f1": f1.mean()}
    # support-weighted recall is sum(tp) / total, i.e. accuracy; assign it so
    # the identity holds exactly rather than to rounding
    weighted = {"precision": float(w @ pr), "recall": acc, "f1": float(w @ f1)}
    if fpr_average == "macro":
        fpr_agg = float(fpr.mean())
    else:
        fpr_agg = _ratio(fp.sum(), fp.sum() + tn.sum(), "fpr_micro", undefined)
    return MetricsReport(
        class_names=cm.class_names,
        precision=pr,
        recall=rc,
        f1=f1,
        support=support,
        fpr=fpr,
        accuracy=acc,
        macro=macro,
        weighted=weighted,
        fpr_aggregate=fpr_agg,
        fpr_average=fpr_average,
        total=total,
        confusion=counts.copy(),
        undefined=undefined,
        roc=dict(roc or {}),
        loss=loss,
    )


def micro_f1(cm):
    """Pooled F1 over all classes; equals accuracy for single-label data."""
    tp = int(np.trace(cm.counts))
    fp = fn = cm.total - tp
    return 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)


def evaluate_scores(proba, y_true, class_names, fpr_average="macro", loss=None):
    """Full report from class-probability rows and integer labels."""
    proba = np.asarray(proba, dtype=np.float64)
    cm = confusion(y_true, predict(proba), proba.shape[1], class_names)
    return multiclass_report(cm, fpr_average, one_vs_rest_roc(proba, y_true), loss)


# -- rendering ------------------------------------------------------------------

def _pct(v):
    return f"{100.0 * v:.2f}%"


def render_text(report):
    names = [f"{n} ({i})" for i, n in enumerate(report.class_names)]
    width = max(14, *(len(n) for n in names)) + 2
    head = f"{'':<{width}}{'Precision':>11}{'Recall':>11}{'F1-score':>11}{'VD':>9}"
    lines = [head, "-" * len(head)]
    for i, name in enumerate(names):
        lines.append(
            f"{name:<{width}}{_pct(report.precision[i]):>11}{_pct(report.recall[i]):>11}"
            f"{_pct(report.f1[i]):>11}{int(report.support[i]):>9d}"
        )
    lines.append("-" * len(head))
    lines.append(f"{'Accuracy':<{width}}{'':>11}{'':>11}{_pct(report.accuracy):>11}"
                 f"{int(report.total):>9d}")
    for label, avg in (("Macro avg", report.macro), ("Weighted avg", report.weighted)):
        lines.append(
            f"{label:<{width}}{_pct(avg['precision']):>11}{_pct(avg['recall']):>11}"
            f"{_pct(avg['f1']):>11}{int(report.total):>9d}"
        )
    lines.append(f"{'Total VD':<{width}}{'':>33}{int(report.total):>9d}")
    lines.append(f"FPR ({report.fpr_average}): {100.0 * report.fpr_aggregate:.4f}%")
    aucs = [f"{i}:{a:.4f}" for i, a in sorted(report.auc.items()) if a is not None]
    if aucs:
        lines.append("AUC: " + " ".join(aucs))
    if report.loss is not None:
        # loss is a raw cross-entropy value, not a percentage
        lines.append(f"Loss: {report.loss:.6f}")
    if report.undefined:
        lines.append("Zero-denominator (reported as 0): " + ", ".join(report.undefined))
    return "\n".join(lines) + "\n"


def render_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def render_report(report):
    """Return ``(text_table, json_string)``."""
    return render_text(report), render_json(report)


def report_from_json(text):
    return MetricsReport.from_dict(json.loads(text))


def roc_to_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "threshold", "fpr", "tpr"])
        for c, r in sorted(report.roc.items()):
            if r is None:
                continue
            for th, f, t in zip(r.thresholds, r.fpr, r.tpr):
                w.writerow([c, "inf" if math.isinf(th) else repr(float(th)),
                            repr(float(f)), repr(float(t))])


_RATE = {"type": "number", "minimum": 0, "maximum": 1}
_AVG = {
    "type": "object",
    "required": ["precision", "recall", "f1"],
    "properties": {"precision": _RATE, "recall": _RATE, "f1": _RATE},
    "additionalProperties": False,
}
_ROC = {
    "type": ["object", "null"],
    "required": ["thresholds", "fpr", "tpr", "auc"],
    "properties": {
        "thresholds": {"type": "array", "items": {"type": ["number", "string"]}},
        "fpr": {"type": "array", "items": _RATE},
        "tpr": {"type": "array", "items": _RATE},
        "auc": _RATE,
    },
}


def report_schema():
    """JSON Schema (draft 2020-12) for :func:`render_json` output."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "Classification report",
        "type": "object",
        "required": [
            "schema_version", "class_names", "per_class", "accuracy", "macro_avg",
            "weighted_avg", "fpr_aggregate", "fpr_average", "total", "confusion",
            "undefined", "roc", "loss",
        ],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "class_names": {"type": "array", "items": {"type": "string"}, "minItems": 2},
            "per_class": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["class", "name", "precision", "recall", "f1", "fpr", "support"],
                    "properties": {
                        "class": {"type": "integer", "minimum": 0},
                        "name": {"type": "string"},
                        "precision": _RATE,
                        "recall": _RATE,
                        "f1": _RATE,
                        "fpr": _RATE,
                        "support": {"type": "integer", "minimum": 0},
                    },
                    "additionalProperties": False,
                },
            },
            "accuracy": _RATE,
            "macro_avg": _AVG,
            "weighted_avg": _AVG,
            "fpr_aggregate": _RATE,
            "fpr_average": {"enum": ["macro", "micro"]},
            "total": {"type": "integer", "minimum": 0},
            "confusion": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "undefined": {"type": "array", "items": {"type": "string"}},
            "roc": {"type": "object", "additionalProperties": _ROC},
            "loss": {"type": ["number", "null"]},
        },
        "additionalProperties": False,
    }
