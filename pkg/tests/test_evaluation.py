import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from instatraits.errors import InsufficientDataError, UndefinedStatisticError, ValidationError
from instatraits.evaluation import (
    ConfusionMatrix,
    EvaluationResult,
    build_report,
    evaluate_predictions,
    metrics_two_level,
    per_class_f1,
    roc_auc,
    roc_curve,
    split_train_test,
    trapezoid_auc,
    weighted_f1,
)


# --- split -----------------------------------------------------------------

@pytest.mark.parametrize("n,train", [(10, 8), (5, 4), (7, 5), (400, 320)])
def test_split_sizes(n, train):
    tr, te = split_train_test(n, seed=3)
    assert len(tr) == train and len(te) == n - train
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))


def test_split_deterministic_and_ids():
    ids = [f"p{i}" for i in range(20)]
    a = split_train_test(ids, seed=1)
    b = split_train_test(ids, seed=1)
    assert a[0].tolist() == b[0].tolist()
    assert split_train_test(ids, seed=2)[0].tolist() != a[0].tolist()
    assert set(a[0]) | set(a[1]) == set(ids)


def test_split_errors():
    with pytest.raises(InsufficientDataError):
        split_train_test(4)
    with pytest.raises(ValidationError):
        split_train_test(10, ratio=1.0)
    with pytest.raises(ValidationError):
        split_train_test(10, stratify=["a"] * 9)


def test_stratified_split_keeps_proportions():
    labels = ["High"] * 20 + ["Low"] * 80
    tr, te = split_train_test(100, seed=0, stratify=labels)
    assert sum(labels[i] == "High" for i in te) == 4
    assert len(tr) == 80


# --- two-level metrics -----------------------------------------------------

def test_metric_examples():
    m = metrics_two_level(ConfusionMatrix.two_level(tp=3, fp=2, fn=1, tn=4))
    assert m.accuracy == 0.7
    assert m.precision == 0.6
    assert m.recall == 0.75
    m = metrics_two_level(ConfusionMatrix.two_level(tp=4, fp=1, fn=1, tn=0))
    assert m.precision == m.recall == m.f1 == 0.8


def test_zero_denominators_flagged():
    m = metrics_two_level(ConfusionMatrix.two_level(tp=0, fp=0, fn=2, tn=3))
    assert m.precision == 0 and m.f1 == 0
    assert "precision" in m.undefined and "f1" in m.undefined
    with pytest.raises(InsufficientDataError):
        metrics_two_level(ConfusionMatrix.two_level(0, 0, 0, 0))


def test_confusion_matrix_validation():
    with pytest.raises(ValidationError):
        ConfusionMatrix(("Low", "High"), np.array([[1, -1], [0, 0]]))
    with pytest.raises(ValidationError):
        ConfusionMatrix.from_labels(["Low"], ["Medium"], ("Low", "High"))
    cm = ConfusionMatrix.from_labels(["Low", "High", "High"], ["Low", "Low", "High"], ("Low", "High"))
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (1, 0, 1, 1)
    with pytest.raises(ValidationError):
        ConfusionMatrix(("Low", "Medium", "High"), np.eye(3)).tp


@given(st.lists(st.lists(st.integers(0, 6), min_size=3, max_size=3), min_size=3, max_size=3))
def test_accuracy_is_trace_over_total(grid):
    counts = np.array(grid)
    if counts.sum() == 0:
        return
    cm = ConfusionMatrix(("Low", "Medium", "High"), counts)
    assert cm.accuracy() == np.trace(counts) / counts.sum()
    f1s = per_class_f1(cm)
    sizes = cm.class_sizes()
    if sum(sizes):
        w = weighted_f1(f1s, sizes)
        nonzero = [f for f, s in zip(f1s, sizes) if s > 0]
        assert min(nonzero) - 1e-12 <= w <= max(nonzero) + 1e-12


# --- weighted F1 -----------------------------------------------------------

def test_weighted_f1_examples():
    assert weighted_f1([0.6], [9]) == 0.6
    assert weighted_f1([0.8, 0.4], [3, 1]) == pytest.approx(0.7)
    assert weighted_f1([0.2, 0.5, 0.8], [4, 4, 4]) == pytest.approx(0.5)
    with pytest.raises(InsufficientDataError):
        weighted_f1([0.5, 0.5], [0, 0])
    with pytest.raises(ValidationError):
        weighted_f1([0.5], [1, 2])


def test_per_class_f1_one_vs_rest():
    cm = ConfusionMatrix(("Low", "Medium", "High"), np.array([[2, 1, 0], [0, 3, 1], [0, 0, 1]]))
    f1 = per_class_f1(cm)
    assert f1[0] == pytest.approx(2 * 2 / (4 + 0 + 1))
    assert f1[1] == pytest.approx(2 * 3 / (6 + 1 + 1))
    assert f1[2] == pytest.approx(2 * 1 / (2 + 1 + 0))


# --- AUC -------------------------------------------------------------------

def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 4, [0, 1, 0, 1]) == 0.5
    assert roc_auc([0.1, 0.4, 0.35, 0.8], ["Low", "Low", "High", "High"]) == 0.75
    with pytest.raises(UndefinedStatisticError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValidationError):
        roc_auc([0.1, 0.2], ["Low", "Medium"])


scores_labels = st.integers(2, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 8).map(float), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n),
))


@given(scores_labels)
def test_auc_properties(data):
    s, y = data
    if all(y) or not any(y):
        return
    auc = roc_auc(s, y)
    assert 0 <= auc <= 1
    assert auc + roc_auc(s, [not v for v in y]) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(np.exp(np.array(s)) * 3 - 1, y) == auc
    assert trapezoid_auc(s, y) == pytest.approx(auc, abs=1e-12)


def test_roc_curve_endpoints():
    fpr, tpr = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


# --- evaluation results and report ----------------------------------------

def result(trait, family, acc, scheme="two", auc=0.5, precision=0.5, wf1=0.5):
    return EvaluationResult(trait, scheme, family, 10, 0, acc, [5, 5], [0.5, 0.5], wf1,
                            precision=precision if scheme == "two" else None,
                            auc=auc if scheme == "two" else None)


def test_evaluate_predictions_two_level():
    y = ["High", "High", "Low", "Low", "Low"]
    p = ["High", "Low", "Low", "Low", "High"]
    proba = np.array([[0.2, 0.8], [0.6, 0.4], [0.9, 0.1], [0.7, 0.3], [0.3, 0.7]])
    r = evaluate_predictions("neuroticism", "two", "LR", y, p, proba, split_seed=4)
    assert r.accuracy == 0.6 and r.precision == 0.5 and r.recall == 0.5
    assert r.auc == pytest.approx(5 / 6)
    assert r.class_sizes == [3, 2] and r.majority_rate == 0.6 and r.split_seed == 4


def test_evaluate_single_class_test_set():
    r = evaluate_predictions("t", "two", "LR", ["Low"] * 3, ["Low", "High", "Low"], np.full((3, 2), 0.5))
    assert r.auc is None
    assert any("auc undefined" in n for n in r.notes)
    assert any(n.startswith("recall undefined") for n in r.notes)


def test_evaluate_three_level():
    y = ["Low", "Medium", "High", "Medium"]
    r = evaluate_predictions("t", "three", "GLM", y, y)
    assert r.accuracy == 1.0 and r.weighted_f1 == 1.0 and r.precision is None


def test_report_best_flags_and_renderings(tmp_path):
    res = [
        result("extraversion", "MLP", 0.74, auc=0.802, precision=0.74),
        result("extraversion", "GLM", 0.70, auc=0.75, precision=0.70),
        result("extraversion", "LR", 0.72, auc=0.76, precision=0.71),
        result("extraversion", "RF", 0.73, auc=0.78, precision=0.72),
    ]
    rep = build_report(res)
    best = {(c["family"], c["metric"]) for c in rep.cells() if c["best"]}
    assert best == {("MLP", "accuracy"), ("MLP", "auc"), ("MLP", "precision")}
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert {(r["family"], r["metric"]) for r in rows if r["best"] == "true"} == best
    doc = json.loads(rep.to_json())
    assert [c for c in doc["cells"] if c["best"]] == [c for c in rep.cells() if c["best"]]
    text = rep.to_text()
    assert "two-level classification" in text and "DL:accuracy" in text
    assert text.splitlines()[2].split()[-3:] == ["DL", "DL", "DL"]
    paths = rep.write(tmp_path)
    assert paths["csv"].read_text() == rep.to_csv()


def test_single_family_report_all_best():
    rep = build_report([result("neuroticism", "GLM", 0.6), result("openness", "GLM", 0.7)])
    assert all(c["best"] for c in rep.cells())


def test_empty_family_noted():
    rep = build_report([result("neuroticism", "GLM", 0.6)], families=["GLM", "LR"])
    assert any("LR omitted" in n for n in rep.notes)
    assert "note: LR omitted" in rep.to_text()
    with pytest.raises(InsufficientDataError):
        build_report([])


def test_three_level_table_shape():
    res = [result("neuroticism", f, 0.5 + i / 10, scheme="three", wf1=0.4) for i, f in enumerate(["GLM", "MLP", "RF"])]
    text = build_report(res).to_text()
    assert "three-level classification" in text and "weighted_f1" in text
    best = [c for c in build_report(res).cells() if c["best"]]
    assert {(c["family"], c["metric"]) for c in best} == {("RF", "accuracy"), ("GLM", "weighted_f1"),
                                                           ("MLP", "weighted_f1"), ("RF", "weighted_f1")}
