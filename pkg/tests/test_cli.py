import csv
import json
import shutil

import jsonschema
import numpy as np
import pytest

from iiot_ids import cli, metrics as MT, train as TR
from iiot_ids.errors import NumericError

SMALL_MODEL = {"conv_filters": [8, 16], "lstm_units": [8, 8], "dense_units": 16}


def make_project(root, rows=300, features=12, task="multiclass", proportions=None, epochs=2, margin=5,
                 **extra):
    assert cli.main(["synth", "--out", str(root), "--rows", str(rows), "--features",
                     str(features), "--task", task, "--margin", str(margin), "--seed", "1"]
                    + (["--proportions", proportions] if proportions else [])) == 0
    cfg_path = root / "config.json"
    cfg = json.loads(cfg_path.read_text())
    cfg["train"] = {"epochs": epochs, "batch_size": 32}
    cfg["model"] = SMALL_MODEL
    cfg["bench"] = {"n_instances": 20, "warmup": 2, "batch": 16}
    cfg.update(extra)
    cfg_path.write_text(json.dumps(cfg))
    return cfg_path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("proj")
    cfg = make_project(root, epochs=20, margin=8)
    for cmd in ("preprocess", "resample", "train", "evaluate"):
        assert cli.main([cmd, "--config", str(cfg)]) == 0
    return root, cfg


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_outputs(trained):
    root, _ = trained
    run = root / "run"
    for name in ["preprocessed/x_train.npy", "preprocessed/meta.json",
                 "preprocessed/x_train_smote.npy", "checkpoints/model.ckpt",
                 "history/history.csv", "history/timing.csv", "reports/report.json",
                 "reports/report.txt", "reports/confusion.csv", "reports/confusion_pct.csv",
                 "reports/roc.csv"]:
        assert (run / name).is_file(), name
    header = (run / "history/history.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,train_acc,val_loss,val_acc"


def test_report_validates_and_rerenders(trained, capsys):
    root, cfg = trained
    js = (root / "run/reports/report.json").read_text()
    jsonschema.validate(json.loads(js), MT.report_schema())
    capsys.readouterr()
    assert cli.main(["report", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out == (root / "run/reports/report.txt").read_text()


def test_evaluate_perfect_fit_reports_accuracy_one(trained):
    root, _ = trained
    report = MT.report_from_json((root / "run/reports/report.json").read_text())
    assert report.accuracy == 1.0
    assert "100.00%" in (root / "run/reports/report.txt").read_text()


def test_commands_are_byte_identical_across_runs(trained, tmp_path):
    root, _ = trained
    other = tmp_path / "again"
    cfg = make_project(other, epochs=20, margin=8)
    for cmd in ("preprocess", "resample", "train", "evaluate"):
        assert cli.main([cmd, "--config", str(cfg)]) == 0
    a = {k: v for k, v in files(root / "run").items() if k != "history/timing.csv"}
    b = {k: v for k, v in files(other / "run").items() if k != "history/timing.csv"}
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_missing_schema_exits_2_without_outputs(tmp_path):
    cfg = make_project(tmp_path)
    (tmp_path / "schema.json").unlink()
    assert cli.main(["preprocess", "--config", str(cfg)]) == 2
    assert not (tmp_path / "run").exists()


def test_invalid_configs_exit_2(tmp_path):
    for extra in ({"train": {"epochs": 0}}, {"variant": 10}, {"task": "ternary"},
                  {"bogus": 1}, {"config_version": 2}):
        d = tmp_path / str(len(list(tmp_path.iterdir())))
        cfg = make_project(d, rows=60)
        raw = json.loads(cfg.read_text())
        raw.update(extra)
        cfg.write_text(json.dumps(raw))
        assert cli.main(["preprocess", "--config", str(cfg)]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "nope.json")]) == 2


def test_variant_mismatch_exits_2(trained, tmp_path):
    root, cfg = trained
    other = tmp_path / "v4"
    shutil.copytree(root, other)
    raw = json.loads((other / "config.json").read_text())
    raw["variant"] = 4
    (other / "config.json").write_text(json.dumps(raw))
    assert cli.main(["train", "--config", str(other / "config.json")]) == 0
    assert cli.main(["evaluate", "--config", str(cfg), "--checkpoint",
                     str(other / "run/checkpoints/model.ckpt")]) == 2


def test_divergence_exits_3_and_keeps_checkpoint(tmp_path, monkeypatch):
    cfg = make_project(tmp_path, rows=120)
    assert cli.main(["preprocess", "--config", str(cfg)]) == 0
    calls = {"n": 0}
    real = TR.adam_step

    def poisoned(*a):
        calls["n"] += 1
        if calls["n"] > 4:
            raise NumericError("non-finite gradient for parameter 'head.output.kernel'")
        return real(*a)

    monkeypatch.setattr(TR, "adam_step", poisoned)
    assert cli.main(["train", "--config", str(cfg)]) == 3
    assert (tmp_path / "run/checkpoints/model.ckpt").is_file()
    assert len((tmp_path / "run/history/history.csv").read_text().splitlines()) == 2


def test_bench_reports_both_modes(trained, capsys):
    root, cfg = trained
    assert cli.main(["bench", "--config", str(cfg), "--n", "30"]) == 0
    out = json.loads((root / "run/reports/bench.json").read_text())
    for mode in ("batch_of_1", "amortized"):
        assert out[mode]["mean"] > 0 and np.isfinite(out[mode]["p99"])
    assert out["batch_of_1"]["n"] == 30
    assert "batch of 1" in capsys.readouterr().out


def test_bench_repeatable_within_3x(trained):
    root, cfg = trained
    means = []
    for _ in range(2):
        assert cli.main(["bench", "--config", str(cfg), "--n", "50"]) == 0
        means.append(json.loads((root / "run/reports/bench.json").read_text())
                     ["batch_of_1"]["mean"])
    assert max(means) / min(means) < 3.0


def test_matrix_grid_and_headers(tmp_path):
    cfg = make_project(tmp_path, rows=240, features=8,
                       matrix={"variants": [1, 2, 9], "epochs": 1, "workers": 2})
    assert cli.main(["preprocess", "--config", str(cfg)]) == 0
    assert cli.main(["matrix", "--config", str(cfg)]) == 0
    with open(tmp_path / "run/reports/matrix.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.MATRIX_COLUMNS
    assert [r[0] for r in rows[1:]] == ["1", "2", "9"]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert values.shape == (3, 4) and np.all(np.isfinite(values))


def test_matrix_marks_failed_cells(tmp_path, monkeypatch):
    cfg = make_project(tmp_path, rows=120, features=8,
                       matrix={"variants": [2], "epochs": 1, "workers": 1})
    assert cli.main(["preprocess", "--config", str(cfg)]) == 0
    real = cli._matrix_cell

    def flaky(c, data, variant, use_smote, seed):
        if use_smote:
            raise NumericError("forced")
        return real(c, data, variant, use_smote, seed)

    monkeypatch.setattr(cli, "_matrix_cell", flaky)
    assert cli.main(["matrix", "--config", str(cfg)]) == 0
    row = (tmp_path / "run/reports/matrix.csv").read_text().splitlines()[1].split(",")
    assert row[3:] == ["FAILED", "FAILED"] and row[1] != "FAILED"


def test_leaky_mode_flags_meta(tmp_path):
    cfg = make_project(tmp_path, rows=200, proportions="0.5,0.1,0.1,0.1,0.1,0.1",
                       smote={"enabled": True, "mode": "leaky"})
    assert cli.main(["preprocess", "--config", str(cfg)]) == 0
    meta = json.loads((tmp_path / "run/preprocessed/meta.json").read_text())
    assert meta["smote_before_split"] is True
    train_hist = meta["histogram"]["train"]
    assert len(set(train_hist.values())) <= 2  # balanced up to split rounding
