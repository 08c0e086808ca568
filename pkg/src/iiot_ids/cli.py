"""Command-line pipeline: preprocess, resample, train, evaluate, report, bench, matrix.

Every command reads one JSON run config. Outputs land in a fixed layout
under the run directory::

    preprocessed/  x_train.npy y_train.npy x_test.npy y_test.npy meta.json
                   x_train_smote.npy y_train_smote.npy smote.json
    checkpoints/   model.ckpt
    history/       history.csv timing.csv
    reports/       report.json report.txt confusion.csv confusion_pct.csv roc.csv
                   bench.json matrix.csv matrix_recall.csv

Exit codes: 0 success, 2 configuration or input error, 3 training failure.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
import csv
import json
import logging
from pathlib import Path
import sys
import time

import numpy as np

from . import data as D
from . import metrics as M
from . import models, smote, tensor
from ._accel import BACKEND, thread_cap
from .errors import (CheckpointError, ConfigError, DataError, IdsError, NumericError,
                     TrainingDiverged)
from .train import TrainConfig, cross_entropy, train

log = logging.getLogger("iiot_ids")

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_TRAINING = 0, 2, 3
MATRIX_COLUMNS = ("variant", "acc_before_smote", "loss_before_smote",
                  "acc_after_smote", "loss_after_smote")
FAILED = "FAILED"


# -- configuration --------------------------------------------------------------

@dataclass
class DatasetConfig:
    csv: str
    schema: str
    split_ratio: float = 0.8
    stratified: bool = True
    channels: int = 1


@dataclass
class SmoteSection:
    enabled: bool = False
    k: int = 5
    seed: int = None  # defaults to the run seed
    # "train_only" resamples the training split; "leaky" resamples the whole
    # dataset before splitting, so synthetic rows can straddle the split
    mode: str = "train_only"


@dataclass
class BenchConfig:
    n_instances: int = 1000
    warmup: int = 50
    batch: int = 1000


@dataclass
class MatrixConfig:
    variants: list = field(default_factory=lambda: list(range(1, 10)))
    epochs: int = None  # defaults to train.epochs
    workers: int = None  # defaults to IDS_THREADS


@dataclass
class RunConfig:
    dataset: DatasetConfig
    task: str = "multiclass"
    variant: int = models.FLAGSHIP
    seed: int = 0
    output_dir: str = "run"
    smote: SmoteSection = field(default_factory=SmoteSection)
    train: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    fpr_average: str = "macro"
    bench: BenchConfig = field(default_factory=BenchConfig)
    matrix: MatrixConfig = field(default_factory=MatrixConfig)
    config_version: int = CONFIG_VERSION

    @property
    def num_classes(self):
        return 2 if self.task == "binary" else 6

    @property
    def out(self):
        return Path(self.output_dir)

    def train_config(self, **overrides):
        opts = dict(self.train)
        opts.setdefault("seed", self.seed)
        opts.update(overrides)
        try:
            return TrainConfig(**opts)
        except TypeError as exc:
            raise ConfigError(f"bad train section: {exc}") from exc

    def smote_config(self):
        seed = self.seed if self.smote.seed is None else self.smote.seed
        return smote.SmoteConfig(k=int(self.smote.k), seed=int(seed))


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {unknown}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {name!r} section: {exc}") from exc


def parse_config(raw, base_dir="."):
    """Validate a decoded config dict; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    ds_raw = raw.get("dataset")
    if not isinstance(ds_raw, dict) or not {"csv", "schema"} <= set(ds_raw):
        raise ConfigError("config needs a 'dataset' section with 'csv' and 'schema' paths")
    ds = _section(DatasetConfig, ds_raw, "dataset")
    base = Path(base_dir)
    ds.csv = str(base / ds.csv)
    ds.schema = str(base / ds.schema)
    cfg = RunConfig(
        dataset=ds,
        task=raw.get("task", "multiclass"),
        variant=raw.get("variant", models.FLAGSHIP),
        seed=raw.get("seed", 0),
        output_dir=str(base / raw.get("output_dir", "run")),
        smote=_section(SmoteSection, raw.get("smote"), "smote"),
        train=dict(raw.get("train") or {}),
        model=dict(raw.get("model") or {}),
        fpr_average=raw.get("fpr_average", "macro"),
        bench=_section(BenchConfig, raw.get("bench"), "bench"),
        matrix=_section(MatrixConfig, raw.get("matrix"), "matrix"),
    )
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.task not in ("binary", "multiclass"):
        raise ConfigError(f"task must be 'binary' or 'multiclass', got {cfg.task!r}")
    for name in ("variant", "seed"):
        if not isinstance(getattr(cfg, name), int) or isinstance(getattr(cfg, name), bool):
            raise ConfigError(f"{name} must be an integer")
    if cfg.variant not in models.CATALOG:
        raise ConfigError(f"unknown variant {cfg.variant}; valid ids are "
                          f"{sorted(models.CATALOG)}")
    if not 0.0 < cfg.dataset.split_ratio < 1.0:
        raise ConfigError("dataset.split_ratio must lie strictly between 0 and 1")
    if int(cfg.dataset.channels) < 1:
        raise ConfigError("dataset.channels must be >= 1")
    if cfg.fpr_average not in ("macro", "micro"):
        raise ConfigError("fpr_average must be 'macro' or 'micro'")
    if cfg.bench.n_instances < 1 or cfg.bench.batch < 1 or cfg.bench.warmup < 0:
        raise ConfigError("bench sizes must be positive")
    bad = [v for v in cfg.matrix.variants if v not in models.CATALOG]
    if bad:
        raise ConfigError(f"matrix lists unknown variants {bad}")
    if cfg.smote.mode not in ("train_only", "leaky"):
        raise ConfigError(f"smote.mode must be 'train_only' or 'leaky', got {cfg.smote.mode!r}")
    cfg.smote_config()
    cfg.train_config()
    hyper(cfg)


def hyper(cfg):
    if not cfg.model:
        return None
    try:
        return models.Hyperparams(**cfg.model)
    except TypeError as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def load_config(path, seed=None, out=None):
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    cfg = parse_config(raw, path.parent)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.output_dir = out
    return cfg


# -- output bookkeeping ---------------------------------------------------------

class Outputs:
    """Tracks files written by one command so a failure can remove them."""

    def __init__(self, root):
        self.root = Path(root)
        self.written = []

    def path(self, sub, name):
        d = self.root / sub
        d.mkdir(parents=True, exist_ok=True)
        p = d / name
        self.written.append(p)
        return p

    def save_npy(self, sub, name, arr):
        p = self.path(sub, name)
        with open(p, "wb") as fh:
            np.save(fh, np.ascontiguousarray(arr), allow_pickle=False)
        return p

    def save_json(self, sub, name, obj):
        p = self.path(sub, name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def save_text(self, sub, name, text):
        p = self.path(sub, name)
        p.write_text(text, encoding="utf-8")
        return p

    def discard(self):
        for p in self.written:
            for q in (p, Path(f"{p}.tmp")):
                if q.exists():
                    q.unlink()


@contextmanager
def tracked(cfg):
    """Remove this command's outputs on failure.

    Divergence is the exception: the last-good checkpoint and the partial
    history are kept on purpose.
    """
    outs = Outputs(cfg.out)
    try:
        yield outs
    except TrainingDiverged:
        raise
    except BaseException:
        outs.discard()
        raise


def _load_npy(path):
    try:
        return np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise DataError(f"missing {path}; run `ids preprocess` first")


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"missing {what} at {path}")


# -- commands -------------------------------------------------------------------

def cmd_preprocess(cfg):
    schema = D.DatasetSchema.from_json(cfg.dataset.schema)
    ds = D.load_csv(cfg.dataset.csv, schema)
    y, names = ds.labels(cfg.task)
    ch = int(cfg.dataset.channels)
    if ds.features.shape[1] % ch:
        raise ConfigError(f"{ds.features.shape[1]} features do not split into {ch} channels")
    features = ds.features
    leaky = cfg.smote.enabled and cfg.smote.mode == "leaky"
    if leaky:
        features, y = smote.resample(features, y, cfg.smote_config())
    tr, te = D.split_indices(y, cfg.dataset.split_ratio, cfg.seed, cfg.dataset.stratified)
    x_tr, x_te, stats = D.standardize(features[tr], features[te])
    with tracked(cfg) as outs:
        outs.save_npy("preprocessed", "x_train.npy", x_tr)
        outs.save_npy("preprocessed", "y_train.npy", y[tr])
        outs.save_npy("preprocessed", "x_test.npy", x_te)
        outs.save_npy("preprocessed", "y_test.npy", y[te])
        meta = {
            "task": cfg.task,
            "class_names": names,
            "feature_names": list(ds.feature_names),
            "channels": ch,
            "scaler": stats.to_dict(),
            "categorical_maps": ds.categorical_maps,
            "rows_read": ds.rows_read,
            "rows_dropped": ds.rows_dropped,
            "histogram": {"train": smote.histogram(y[tr]), "test": smote.histogram(y[te])},
            "smote_before_split": leaky,
            "seed": cfg.seed,
        }
        outs.save_json("preprocessed", "meta.json", meta)
    print(f"rows read {ds.rows_read}, dropped {ds.rows_dropped}; "
          f"train {len(tr)}, test {len(te)}")
    return EXIT_OK


def cmd_resample(cfg):
    pre = cfg.out / "preprocessed"
    x, y = _load_npy(pre / "x_train.npy"), _load_npy(pre / "y_train.npy")
    x_res, y_res = smote.resample(x, y, cfg.smote_config())
    with tracked(cfg) as outs:
        outs.save_npy("preprocessed", "x_train_smote.npy", x_res)
        outs.save_npy("preprocessed", "y_train_smote.npy", y_res)
        outs.save_json("preprocessed", "smote.json", {
            "k": cfg.smote_config().k,
            "seed": cfg.smote_config().seed,
            "before": smote.histogram(y),
            "after": smote.histogram(y_res),
        })
    print(f"SMOTE: {len(y)} -> {len(y_res)} rows; per class {smote.histogram(y_res)}")
    return EXIT_OK


def _training_data(cfg, use_smote):
    pre = cfg.out / "preprocessed"
    meta = _read_json(pre / "meta.json", "preprocessing metadata")
    if meta["task"] != cfg.task:
        raise ConfigError(f"preprocessed data is for task {meta['task']!r}, config says "
                          f"{cfg.task!r}; rerun preprocess")
    x, y = _load_npy(pre / "x_train.npy"), _load_npy(pre / "y_train.npy")
    if use_smote and not meta.get("smote_before_split"):
        sx, sy = pre / "x_train_smote.npy", pre / "y_train_smote.npy"
        if sx.exists() and sy.exists():
            x, y = _load_npy(sx), _load_npy(sy)
        else:
            log.info("no resampled files found; running SMOTE in memory")
            x, y = smote.resample(x, y, cfg.smote_config())
    xt, yt = _load_npy(pre / "x_test.npy"), _load_npy(pre / "y_test.npy")
    ch = meta["channels"]
    return D.to_sequence(x, ch), y, D.to_sequence(xt, ch), yt, meta


def _build(cfg, steps, channels, variant=None, seed=None):
    spec = models.variant_spec(variant or cfg.variant, cfg.num_classes, steps, channels,
                               hyper(cfg))
    return models.build_variant(spec, seed=cfg.seed if seed is None else seed)


def _preprocessing_record(cfg, meta):
    return {"task": cfg.task, "class_names": meta["class_names"], "channels": meta["channels"],
            "scaler": meta["scaler"], "smote": bool(cfg.smote.enabled)}


def _fit(cfg, model, x, y, xt, yt, tcfg):
    weights = D.class_weights(y, cfg.num_classes) if tcfg.use_class_weights else None
    return train(model, (x, y), (xt, yt), tcfg, class_weights=weights)


def cmd_train(cfg):
    x, y, xt, yt, meta = _training_data(cfg, cfg.smote.enabled)
    tcfg = cfg.train_config()
    model = _build(cfg, x.shape[1], x.shape[2])
    model.preprocessing = _preprocessing_record(cfg, meta)
    with tracked(cfg) as outs:
        ckpt = outs.path("checkpoints", "model.ckpt")
        try:
            model, history = _fit(cfg, model, x, y, xt, yt, tcfg)
        except TrainingDiverged as exc:
            models.save(model, ckpt)
            if exc.history is not None and len(exc.history):
                exc.history.to_csv(outs.path("history", "history.csv"), include_timing=False)
            raise
        models.save(model, ckpt)
        history.to_csv(outs.path("history", "history.csv"), include_timing=False)
        with open(outs.path("history", "timing.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "seconds"])
            for r in history.records:
                w.writerow([r.epoch, f"{r.seconds:.6f}"])
    last = history.records[-1]
    print(f"variant #{cfg.variant} {cfg.task}: epochs {len(history)}, "
          f"val_acc {last.val_acc:.4f}, val_loss {last.val_loss:.6f}")
    return EXIT_OK


def _checkpoint(cfg, override=None):
    path = Path(override) if override else cfg.out / "checkpoints" / "model.ckpt"
    model = models.load(path, expect_variant=cfg.variant)
    if model.spec.num_classes != cfg.num_classes:
        raise CheckpointError(f"{path}: {model.spec.num_classes}-class model, config task "
                              f"{cfg.task!r} needs {cfg.num_classes}")
    return model


def _report(cfg, model, xt, yt, class_names):
    logits = model.logits(xt)
    with tensor.no_grad():
        loss = cross_entropy(logits, yt).item()
    z = logits - logits.max(axis=1, keepdims=True)
    proba = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    return M.evaluate_scores(proba, yt, class_names, cfg.fpr_average, loss=loss)


def cmd_evaluate(cfg, checkpoint=None):
    model = _checkpoint(cfg, checkpoint)
    pre = cfg.out / "preprocessed"
    meta = _read_json(pre / "meta.json", "preprocessing metadata")
    xt = D.to_sequence(_load_npy(pre / "x_test.npy"), meta["channels"])
    yt = _load_npy(pre / "y_test.npy")
    report = _report(cfg, model, xt, yt, meta["class_names"])
    text, js = M.render_report(report)
    with tracked(cfg) as outs:
        outs.save_text("reports", "report.json", js)
        outs.save_text("reports", "report.txt", text)
        cm = M.ConfusionMatrix(report.confusion, report.class_names)
        cm.to_csv(outs.path("reports", "confusion.csv"))
        cm.to_csv(outs.path("reports", "confusion_pct.csv"), percent=True)
        M.roc_to_csv(report, outs.path("reports", "roc.csv"))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_report(cfg):
    path = cfg.out / "reports" / "report.json"
    try:
        report = M.report_from_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no report at {path}; run `ids evaluate` first")
    except (ValueError, KeyError) as exc:
        raise DataError(f"unreadable report {path}: {exc}")
    sys.stdout.write(M.render_text(report))
    return EXIT_OK


def latency_stats(samples):
    s = np.asarray(samples, dtype=np.float64)
    return {"mean": float(s.mean()), "p50": float(np.percentile(s, 50)),
            "p99": float(np.percentile(s, 99)), "n": int(s.size)}


def bench_model(model, x, n_instances=1000, warmup=50, batch=1000):
    """Per-instance forward latency in seconds, batch-of-1 and amortised."""
    n = len(x)
    single = np.empty(n_instances)
    with tensor.no_grad():
        for i in range(warmup):
            model.forward(x[i % n : i % n + 1])
        for i in range(n_instances):
            xi = x[i % n : i % n + 1]
            t0 = time.perf_counter()
            model.forward(xi)
            single[i] = time.perf_counter() - t0
        idx = np.arange(batch) % n
        xb = x[idx]
        model.forward(xb[: min(batch, 8)])
        rounds = []
        for _ in range(3):
            t0 = time.perf_counter()
            model.forward(xb)
            rounds.append((time.perf_counter() - t0) / batch)
    return {"batch_of_1": latency_stats(single),
            "amortized": {**latency_stats(rounds), "batch": int(batch)}}


def cmd_bench(cfg, checkpoint=None, n_instances=None):
    model = _checkpoint(cfg, checkpoint)
    pre = cfg.out / "preprocessed"
    steps, ch = model.spec.input_shape
    if (pre / "x_test.npy").exists():
        x = D.to_sequence(_load_npy(pre / "x_test.npy"), ch)
    else:
        x = np.random.default_rng(cfg.seed).normal(size=(256, steps, ch))
    n = int(n_instances or cfg.bench.n_instances)
    stats = bench_model(model, x, n, cfg.bench.warmup, cfg.bench.batch)
    stats["variant"] = model.spec.id
    stats["backend"] = BACKEND
    with tracked(cfg) as outs:
        outs.save_json("reports", "bench.json", stats)
    b1, am = stats["batch_of_1"], stats["amortized"]
    print(f"variant #{model.spec.id} ({BACKEND}) per-instance latency, batch of 1: "
          f"mean {b1['mean'] * 1e3:.3f} ms, p50 {b1['p50'] * 1e3:.3f} ms, "
          f"p99 {b1['p99'] * 1e3:.3f} ms over {b1['n']}")
    print(f"amortized over batch {am['batch']}: mean {am['mean'] * 1e3:.3f} ms, "
          f"p50 {am['p50'] * 1e3:.3f} ms, p99 {am['p99'] * 1e3:.3f} ms")
    return EXIT_OK


def _matrix_cell(cfg, data, variant, use_smote, seed):
    x, y, xt, yt, xs, ys, meta = data
    xtr, ytr = (xs, ys) if use_smote else (x, y)
    tcfg = cfg.train_config(seed=seed, **({"epochs": cfg.matrix.epochs}
                                          if cfg.matrix.epochs else {}))
    model = _build(cfg, x.shape[1], x.shape[2], variant, seed)
    model, _ = _fit(cfg, model, xtr, ytr, xt, yt, tcfg)
    report = _report(cfg, model, xt, yt, meta["class_names"])
    return report.accuracy, report.loss, report.recall


def run_matrix(cfg, workers=None):
    """Train every listed variant with and without SMOTE.

    Returns ``{(variant, smote): (acc, loss, per_class_recall) or exception}``.
    Cell ``i`` (variants in order, no-SMOTE before SMOTE) is seeded
    ``cfg.seed + i``.
    """
    x, y, xt, yt, meta = _training_data(cfg, False)
    xs, ys = smote.resample(D.from_sequence(x), y, cfg.smote_config())
    xs = D.to_sequence(xs, meta["channels"])
    data = (x, y, xt, yt, xs, ys, meta)
    cells = [(v, s) for v in cfg.matrix.variants for s in (False, True)]
    workers = workers or cfg.matrix.workers or thread_cap()

    def run(i):
        v, s = cells[i]
        try:
            return _matrix_cell(cfg, data, v, s, cfg.seed + i)
        except (IdsError, FloatingPointError) as exc:
            log.warning("matrix cell variant %d smote=%s failed: %s", v, s, exc)
            return exc

    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(cells)))) as pool:
        results = list(pool.map(run, range(len(cells))))
    return dict(zip(cells, results))


def _fmt(v):
    return repr(float(v))


def cmd_matrix(cfg):
    results = run_matrix(cfg)
    with tracked(cfg) as outs:
        with open(outs.path("reports", "matrix.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MATRIX_COLUMNS)
            for v in cfg.matrix.variants:
                row = [v]
                for s in (False, True):
                    r = results[(v, s)]
                    row += [FAILED, FAILED] if isinstance(r, Exception) else [_fmt(r[0]),
                                                                              _fmt(r[1])]
                w.writerow(row)
        with open(outs.path("reports", "matrix_recall.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "smote", "class", "recall"])
            for (v, s), r in results.items():
                if isinstance(r, Exception):
                    w.writerow([v, int(s), "", FAILED])
                    continue
                for c, rc in enumerate(r[2]):
                    w.writerow([v, int(s), c, _fmt(rc)])
    failed = sum(isinstance(r, Exception) for r in results.values())
    print(f"matrix: {len(results)} cells, {failed} failed")
    return EXIT_OK


def cmd_synth(out, rows=3000, features=60, task="multiclass", margin=4.0, proportions=None,
              seed=0):
    """Write a synthetic dataset plus a ready-to-run config into ``out``."""
    from .synthetic import write_synthetic

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_synthetic(out / "data.csv", out / "schema.json", rows, features, task, margin,
                    proportions, seed)
    config = {"config_version": CONFIG_VERSION,
              "dataset": {"csv": "data.csv", "schema": "schema.json"},
              "task": task, "variant": models.FLAGSHIP, "seed": seed, "output_dir": "run",
              "smote": {"enabled": False, "k": 5}, "train": {"epochs": 19, "batch_size": 128}}
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    print(f"wrote {rows} rows to {out / 'data.csv'} and a config to {out / 'config.json'}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ids", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("preprocess", "load, split and standardise the CSV"),
                        ("resample", "SMOTE-balance the training split"),
                        ("train", "train the configured variant"),
                        ("evaluate", "score a checkpoint on the test split"),
                        ("report", "print the stored classification report"),
                        ("bench", "measure per-instance inference latency"),
                        ("matrix", "train all variants with and without SMOTE")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run config JSON")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="override the output directory")
        if name in ("evaluate", "bench"):
            sp.add_argument("--checkpoint", help="checkpoint path (default: run checkpoint)")
        if name == "bench":
            sp.add_argument("--n", type=int, help="number of single-sample inferences")
    sp = sub.add_parser("synth", help="write a synthetic dataset and config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--rows", type=int, default=3000)
    sp.add_argument("--features", type=int, default=60)
    sp.add_argument("--task", choices=("binary", "multiclass"), default="multiclass")
    sp.add_argument("--margin", type=float, default=4.0)
    sp.add_argument("--proportions", help="comma-separated class priors")
    sp.add_argument("--seed", type=int, default=0)
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "synth":
        props = None
        if args.proportions:
            props = [float(v) for v in args.proportions.split(",")]
        return cmd_synth(args.out, args.rows, args.features, args.task, args.margin, props,
                         args.seed)
    cfg = load_config(args.config, args.seed, args.out)
    if args.command == "preprocess":
        return cmd_preprocess(cfg)
    if args.command == "resample":
        return cmd_resample(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.checkpoint)
    if args.command == "report":
        return cmd_report(cfg)
    if args.command == "bench":
        return cmd_bench(cfg, args.checkpoint, args.n)
    return cmd_matrix(cfg)


def main(argv=None):
    try:
        return run(argv)
    except TrainingDiverged as exc:
        print(f"error: {exc} (last good epoch {exc.last_good_epoch}; checkpoint kept)",
              file=sys.stderr)
        return EXIT_TRAINING
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except IdsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
