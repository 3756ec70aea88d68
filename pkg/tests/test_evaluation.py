import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aeshap.evaluation import (ConfusionMatrix, classification_report, classify, confusion,
                               metrics, optimal_threshold, roc)


def pairwise_auc(labels, scores):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_classify_inclusive():
    assert classify([0.22], 0.22).tolist() == [1]
    assert classify([0.21], 0.22).tolist() == [0]
    assert classify([0.1, 0.5, 0.22], 0.22).tolist() == [0, 1, 1]


def test_confusion_examples():
    assert confusion([1, 1, 0, 0], [1, 1, 0, 0]) == ConfusionMatrix(2, 2, 0, 0)
    assert confusion([1, 0], [0, 1]) == ConfusionMatrix(0, 0, 1, 1)
    assert confusion([1, 0], [0, 0]) == ConfusionMatrix(0, 1, 0, 1)
    with pytest.raises(ValueError):
        confusion([1, 0], [1])


def test_perfect_metrics():
    m = metrics(ConfusionMatrix(5, 5, 0, 0))
    for v in (m.accuracy, m.precision, m.recall, m.f_score, m.specificity, m.g_mean):
        assert v == 1.0


def test_zero_over_zero_is_zero():
    m = metrics(ConfusionMatrix(0, 4, 0, 0))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f_score == 0.0 and m.g_mean == 0.0
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(0, 0, 0, 0))


# Reference classification reports: 50000 benign / 10000 attack, class-1 recall 0.99 for both models;
# class-0 recall 0.65 (baseline) and 0.88 (optimized) fix the matrices. Those
# recalls are themselves rounded, so derived cells agree to within 0.01.
REFERENCE_REPORTS = {
    "model_1": (ConfusionMatrix(tp=9900, tn=32500, fp=17500, fn=100),
                dict(p0=1.00, r0=0.65, f0=0.79, p1=0.36, r1=0.99, f1=0.53, acc=0.71,
                     macro=(0.68, 0.82, 0.66), weighted=(0.89, 0.71, 0.75))),
    "opt_model": (ConfusionMatrix(tp=9900, tn=44000, fp=6000, fn=100),
                  dict(p0=1.00, r0=0.88, f0=0.93, p1=0.62, r1=0.99, f1=0.76, acc=0.90,
                       macro=(0.81, 0.93, 0.85), weighted=(0.93, 0.90, 0.91))),
}


@pytest.mark.parametrize("name", REFERENCE_REPORTS)
def test_reference_reports_reproduced(name):
    cm, want = REFERENCE_REPORTS[name]
    m = metrics(cm)
    got = dict(p0=m.class_0.precision, r0=m.class_0.recall, f0=m.class_0.f1,
               p1=m.class_1.precision, r1=m.class_1.recall, f1=m.class_1.f1, acc=m.accuracy,
               macro=(m.macro_avg.precision, m.macro_avg.recall, m.macro_avg.f1),
               weighted=(m.weighted_avg.precision, m.weighted_avg.recall, m.weighted_avg.f1))
    for key, value in want.items():
        assert np.all(np.abs(np.array(got[key]) - np.array(value)) <= 0.01), key
    assert m.class_1.support == 10000 and m.class_0.support == 50000


def test_gmean_formula_against_table3():
    m = metrics(REFERENCE_REPORTS["opt_model"][0])
    assert m.g_mean == pytest.approx(math.sqrt(0.99 * 0.88))
    assert abs(m.g_mean - 0.933) <= 0.002
    base = metrics(REFERENCE_REPORTS["model_1"][0])
    assert abs(base.g_mean - 0.804) <= 0.003


def test_roc_separable_and_flat():
    c = roc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
    assert c.auc == 1.0
    flat = roc([0, 1, 0, 1], [0.5] * 4)
    assert flat.auc == 0.5
    assert flat.points == [(math.inf, 0.0, 0.0), (0.5, 1.0, 1.0)]
    with pytest.raises(ValueError):
        roc([1, 1], [0.2, 0.3])


def test_roc_shape_invariants(rng):
    y = rng.integers(0, 2, 100)
    s = np.round(rng.normal(size=100), 1)
    c = roc(y, s)
    assert np.all(np.diff(c.thresholds) < 0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    assert (c.fpr[0], c.tpr[0]) == (0.0, 0.0) and c.thresholds[0] == math.inf
    assert (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(2024)
    y = rng.integers(0, 2, 200)
    s = np.round(rng.random(200), 2)  # rounding forces ties
    assert abs(roc(y, s).auc - pairwise_auc(y, s)) <= 1e-9
    assert len(np.unique(s)) < 200


def test_curve_points_reproduced_by_classification(rng):
    y = rng.integers(0, 2, 80)
    s = np.round(rng.normal(size=80), 1)
    c = roc(y, s)
    for t, fpr, tpr in c.points[1:]:
        m = metrics(confusion(y, classify(s, t)))
        cm = m.confusion
        assert m.recall == tpr and cm.fp / (cm.fp + cm.tn) == fpr
        assert abs((1.0 - m.specificity) - fpr) <= 1e-15


def test_optimal_threshold_separable():
    y = np.array([0, 0, 0, 1, 1])
    s = np.array([0.1, 0.2, 0.3, 0.7, 0.9])
    t, g = optimal_threshold(roc(y, s), y, s)
    assert g == 1.0 and t == 0.7
    cm = confusion(y, classify(s, t))
    assert cm.fp == 0 and cm.fn == 0


def test_optimal_threshold_is_scan_maximum(rng):
    y = rng.integers(0, 2, 300)
    s = rng.normal(size=300) + y
    c = roc(y, s)
    t, g = optimal_threshold(c)
    best = max(math.sqrt(tp * (1 - fp)) for _, fp, tp in c.points)
    assert g == best
    # ties go to the larger threshold
    first = next(th for th, fp, tp in c.points if math.sqrt(tp * (1 - fp)) == best)
    assert t == first


signed_scores = st.lists(st.floats(-100, 100, allow_subnormal=False), min_size=4, max_size=60)


@settings(max_examples=80, deadline=None)
@given(signed_scores, st.randoms(use_true_random=False))
def test_auc_invariances(scores, random):
    s = np.array(scores)
    y = np.array([random.randint(0, 1) for _ in s])
    y[0], y[1] = 0, 1
    base = roc(y, s).auc
    # the transforms must stay strictly increasing in floating point too
    for f in (lambda v: 2 * v + 1, lambda v: v ** 3):
        t = f(s)
        if len(np.unique(t)) == len(np.unique(s)):
            assert roc(y, t).auc == base
    assert roc(1 - y, -s).auc == base
    assert 0.0 <= base <= 1.0


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_gmean_bounds(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    m = metrics(ConfusionMatrix(tp, tn, fp, fn))
    assert 0.0 <= m.g_mean <= 1.0
    if m.recall == 0 or m.specificity == 0:
        assert m.g_mean == 0.0


def test_classification_report_layout():
    text = classification_report(metrics(REFERENCE_REPORTS["opt_model"][0]))
    lines = text.splitlines()
    assert "precision" in lines[0] and "support" in lines[0]
    assert lines[3].split() == ["1", "0.62", "0.99", "0.76", "10000"]
    assert lines[5].split() == ["accuracy", "0.90", "60000"]
    assert lines[6].split()[:2] == ["macro", "avg"]
    assert "0/0" in text
