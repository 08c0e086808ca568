import json

import jsonschema
import numpy as np
import pytest

from iiot_ids import metrics as MT
from iiot_ids.errors import ContractError, UndefinedMetricError

from _oracles import confusion_counts, mann_whitney_auc, per_class_masking, safe_div


def test_confusion_examples():
    cm = MT.confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert cm.counts.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 2]]
    one = MT.confusion([2], [5], 6).counts
    assert one[2, 5] == 1 and one.sum() == 1
    with pytest.raises(ContractError):
        MT.confusion([0, 3], [0, 1], 3)


def test_confusion_matches_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        t, p = rng.integers(0, 6, 80), rng.integers(0, 6, 80)
        cm = MT.confusion(t, p, 6)
        assert cm.counts.tolist() == confusion_counts(t, p, 6).tolist()
        assert cm.total == 80
        assert cm.support.tolist() == np.bincount(t, minlength=6).tolist()
        pct = cm.percentages()
        rows = pct.sum(axis=1)[cm.support > 0]
        np.testing.assert_allclose(rows, 100.0, atol=1e-9)


def test_binary_examples():
    perfect = MT.binary_metrics(np.array([[5, 0], [0, 5]]))
    assert perfect.as_tuple() == (1.0, 1.0, 1.0, 1.0, 0.0)
    m = MT.binary_metrics(np.array([[88, 2], [2, 8]]))
    assert m.recall == 0.8 and m.precision == 0.8 and abs(m.f1 - 0.8) < 1e-15
    assert abs(m.fpr - 2 / 90) < 1e-15


def test_binary_zero_denominators_flagged():
    m = MT.binary_metrics(np.array([[10, 0], [0, 0]]))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    assert set(m.undefined) >= {"precision", "recall", "f1"}


def binary_oracle(tn, fp, fn, tp):
    pr = safe_div(tp, tp + fp)
    rc = safe_div(tp, tp + fn)
    return (safe_div(tp + tn, tp + tn + fp + fn), pr, rc, safe_div(2 * pr * rc, pr + rc),
            safe_div(fp, fp + tn))


def test_binary_matches_formula_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = rng.integers(0, 50, size=4)
        got = MT.binary_metrics(c.reshape(2, 2)).as_tuple()
        np.testing.assert_allclose(got, binary_oracle(*c.tolist()), atol=1e-12, rtol=0)


def test_multiclass_perfect_and_binary_reduction():
    y = np.repeat(np.arange(6), 5)
    r = MT.multiclass_report(MT.confusion(y, y, 6))
    assert np.all(r.precision == 1) and np.all(r.recall == 1) and r.fpr_aggregate == 0.0
    rng = np.random.default_rng(2)
    t, p = rng.integers(0, 2, 40), rng.integers(0, 2, 40)
    cm = MT.confusion(t, p, 2)
    b = MT.binary_metrics(cm)
    r = MT.multiclass_report(cm)
    assert (r.accuracy, r.precision[1], r.recall[1], r.f1[1], r.fpr[1]) == b.as_tuple()


def test_multiclass_matches_masking_oracle_and_identities():
    rng = np.random.default_rng(3)
    for _ in range(100):
        t, p = rng.integers(0, 6, 60), rng.integers(0, 6, 60)
        cm = MT.confusion(t, p, 6)
        r = MT.multiclass_report(cm)
        for c, (tp, fp, fn, tn) in enumerate(per_class_masking(t, p, 6)):
            pr, rc = safe_div(tp, tp + fp), safe_div(tp, tp + fn)
            assert abs(r.precision[c] - pr) < 1e-10
            assert abs(r.recall[c] - rc) < 1e-10
            assert abs(r.f1[c] - safe_div(2 * pr * rc, pr + rc)) < 1e-10
            assert abs(r.fpr[c] - safe_div(fp, fp + tn)) < 1e-10
        assert r.weighted["recall"] == r.accuracy
        assert MT.micro_f1(cm) == r.accuracy
        assert abs(r.fpr_aggregate - r.fpr.mean()) < 1e-15


def test_micro_fpr_option():
    cm = MT.confusion([0, 0, 1, 2], [0, 1, 1, 0], 3)
    r = MT.multiclass_report(cm, fpr_average="micro")
    # pooled: fp = 2 wrong predictions, tn = sum over classes of true negatives
    tn = sum(row[3] for row in per_class_masking([0, 0, 1, 2], [0, 1, 1, 0], 3))
    assert r.fpr_aggregate == 2 / (2 + tn)
    with pytest.raises(ContractError):
        MT.multiclass_report(cm, fpr_average="weighted")


def test_roc_examples():
    assert MT.roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0
    flat = MT.roc_curve([0.5] * 6, [1, 0, 1, 0, 0, 1])
    assert flat.auc == 0.5
    with pytest.raises(UndefinedMetricError):
        MT.roc_curve([0.1, 0.2], [1, 1])


def test_roc_matches_mann_whitney_and_is_monotone():
    rng = np.random.default_rng(4)
    for trial in range(200):
        n = int(rng.integers(4, 60))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        s = rng.normal(size=n)
        if trial % 3 == 0:
            s = np.round(s, 1)  # ties
        roc = MT.roc_curve(s, y)
        assert abs(roc.auc - mann_whitney_auc(s, y)) < 1e-10
        assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)
        assert (roc.fpr[0], roc.tpr[0]) == (0.0, 0.0)
        assert (roc.fpr[-1], roc.tpr[-1]) == (1.0, 1.0)


def test_predict_tie_goes_to_lower_index():
    assert MT.predict(np.array([[0.4, 0.4, 0.2]])).tolist() == [0]


def _random_report(seed, k=6, n=120):
    rng = np.random.default_rng(seed)
    proba = rng.dirichlet(np.ones(k), size=n)
    y = rng.integers(0, k, n)
    return MT.evaluate_scores(proba, y, [f"c{i}" for i in range(k)], loss=0.25)


def test_render_perfect_binary():
    y = np.array([0, 1, 0, 1])
    proba = np.eye(2)[y]
    text = MT.render_text(MT.evaluate_scores(proba, y, ["Normal", "Attack"]))
    rows = [line for line in text.splitlines() if line.startswith(("Normal", "Attack"))]
    assert all(line.count("100.00%") == 3 for line in rows)
    assert "Accuracy" in text and "100.00%" in text.split("Accuracy")[1].splitlines()[0]


def test_render_round_trip_and_total_vd():
    for seed in range(10):
        report = _random_report(seed)
        text, js = MT.render_report(report)
        assert MT.render_text(MT.report_from_json(js)) == text
        assert MT.render_json(MT.report_from_json(js)) == js
        vd = [int(line.split()[-1]) for line in text.splitlines()
              if line.startswith("c") and "(" in line]
        total = int([line for line in text.splitlines() if line.startswith("Total VD")][0]
                    .split()[-1])
        assert sum(vd) == total == 120


def test_report_json_validates_against_schema():
    schema = MT.report_schema()
    jsonschema.Draft202012Validator.check_schema(schema)
    for seed in range(10):
        jsonschema.validate(json.loads(MT.render_json(_random_report(seed))), schema)
    # a class with no samples yields a null ROC entry and still validates
    proba = np.eye(3)[[0, 1, 0, 1]]
    rep = MT.evaluate_scores(proba, [0, 1, 0, 1], ["a", "b", "c"])
    assert rep.roc[2] is None
    jsonschema.validate(json.loads(MT.render_json(rep)), schema)


def test_csv_exports(tmp_path):
    report = _random_report(0, k=3, n=30)
    MT.roc_to_csv(report, tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "class,threshold,fpr,tpr"
    assert lines[1].startswith("0,inf,0.0,0.0")
    cm = MT.confusion([0, 1, 1], [0, 1, 0], 2, ["n", "a"])
    cm.to_csv(tmp_path / "cm.csv")
    assert (tmp_path / "cm.csv").read_text() == "true\\pred,n,a\nn,1,0\na,1,1\n"
