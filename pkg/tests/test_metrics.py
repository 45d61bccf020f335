from fractions import Fraction

import numpy as np
import pytest

from mfa_delivery.errors import EmptyScores
from mfa_delivery.metrics import (
    ScoreSet,
    calibrate_threshold,
    compute_accuracy,
    compute_eer,
    compute_roc_auc,
    eer_with_threshold,
)


def pair_count_auc(gen, imp):
    """Mann-Whitney oracle: count ordered pairs, ties worth half."""
    total = Fraction(0)
    for g in gen:
        for i in imp:
            total += 1 if g > i else Fraction(1, 2) if g == i else 0
    return total / (len(gen) * len(imp))


def brute_eer(gen, imp):
    """Oracle: walk every candidate threshold with exact fractions."""
    P, N = len(gen), len(imp)
    ts = sorted(set(gen) | set(imp)) + [float("inf")]
    pts = [(Fraction(sum(i >= t for i in imp), N), Fraction(sum(g < t for g in gen), P)) for t in ts]
    for (fa0, fr0), (fa1, fr1) in zip(pts, pts[1:]):
        if fa0 == fr0:
            return fa0
        if fa1 == fr1:
            return fa1
        if (fa0 - fr0) * (fa1 - fr1) < 0:
            frac = (fa0 - fr0) / ((fa0 - fr0) - (fa1 - fr1))
            return fa0 + frac * (fa1 - fa0)
    raise AssertionError("no crossing")


GEN, IMP = [0.9, 0.6, 0.4], [0.5, 0.3, 0.1]


def count_accuracy(gen, imp, t):
    """Oracle: count correct decisions one by one."""
    correct = 0
    for g in gen:
        correct += g >= t
    for i in imp:
        correct += i < t
    return Fraction(correct, len(gen) + len(imp))


def test_accuracy_fixture():
    s = ScoreSet(GEN, IMP)
    # 0.9, 0.6 accepted and 0.3, 0.1 rejected; 0.4 and 0.5 fall on the wrong side
    assert count_accuracy(GEN, IMP, 0.45) == Fraction(2, 3)
    assert compute_accuracy(s, 0.45) == 2 / 3
    assert compute_accuracy(ScoreSet([0.9, 0.8], [0.1, 0.2]), 0.5) == 1.0
    assert compute_accuracy(ScoreSet([0.1, 0.2], [0.9, 0.8]), 0.5) == 0.0
    assert compute_accuracy(ScoreSet([0.5], [0.1]), 0.5) == 1.0  # >= accepts


def test_eer_fixture():
    assert compute_eer(ScoreSet(GEN, IMP)) == pytest.approx(1 / 3)
    assert float(brute_eer(GEN, IMP)) == pytest.approx(1 / 3)
    assert compute_eer(ScoreSet([0.2, 0.5, 0.7], [0.2, 0.5, 0.7])) == pytest.approx(0.5)


def test_auc_extremes():
    assert compute_roc_auc(ScoreSet([0.9, 0.8], [0.1, 0.2]))[3] == 1.0
    assert compute_roc_auc(ScoreSet([0.5, 0.5], [0.5, 0.5]))[3] == 0.5
    assert compute_roc_auc(ScoreSet([0.1], [0.9]))[3] == 0.0


def test_auc_mixed_case():
    gen, imp = [0.9, 0.6, 0.3], [0.7, 0.3, 0.1]
    auc = compute_roc_auc(ScoreSet(gen, imp))[3]
    assert auc == pytest.approx(float(pair_count_auc(gen, imp)))


def test_roc_curve_shape():
    fpr, tpr, thr, _ = compute_roc_auc(ScoreSet([0.9, 0.6], [0.7, 0.1]))
    assert fpr[0] == 0 and tpr[0] == 0 and fpr[-1] == 1 and tpr[-1] == 1
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert np.isinf(thr[0])


def test_random_against_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        gen = list(np.round(rng.uniform(0, 1, rng.integers(1, 12)), 1))
        imp = list(np.round(rng.uniform(0, 1, rng.integers(1, 12)), 1))
        s = ScoreSet(gen, imp)
        assert compute_roc_auc(s)[3] == pytest.approx(float(pair_count_auc(gen, imp)), abs=1e-12)
        assert compute_eer(s) == pytest.approx(float(brute_eer(gen, imp)), abs=1e-12)
        t = float(rng.uniform(0, 1))
        assert compute_accuracy(s, t) == float(count_accuracy(gen, imp, t))


def test_perfect_separation():
    s = ScoreSet([0.9, 0.95], [0.1, 0.3])
    assert compute_eer(s) == 0.0
    t = calibrate_threshold(s)
    assert t == pytest.approx(0.6)
    assert compute_accuracy(s, t) == 1.0


def test_calibrated_threshold_overlapping():
    s = ScoreSet(GEN, IMP)
    rate, t = eer_with_threshold(s)
    assert calibrate_threshold(s) == t
    assert 0.4 <= t <= 0.6


def test_empty_scores():
    with pytest.raises(EmptyScores):
        compute_eer(ScoreSet([], [0.1]))
    with pytest.raises(EmptyScores):
        compute_roc_auc(ScoreSet([0.3], []))
    with pytest.raises(EmptyScores):
        compute_accuracy(ScoreSet([], []), 0.5)
