import warnings

import numpy as np
import pytest

from mcmoney.money import (THRESHOLDS, IndexWarning, country_aucs, country_weights, money, money_index,
                           product_ftot, roc_curve, roc_for_country, threshold_product_matrix)


def pair_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def test_thresholds():
    assert THRESHOLDS.size == 101 and THRESHOLDS[0] == 0 and THRESHOLDS[-1] == 1


def test_perfect_scores():
    truth = np.array([1, 0, 1, 0, 0])
    assert roc_curve(truth.astype(float), truth).auc == 1.0


def test_constant_half():
    truth = np.array([1, 0, 1, 0, 0])
    curve = roc_curve(np.full(5, 0.5), truth)
    assert curve.auc == pytest.approx(0.5)
    pts = sorted(set(curve.points))
    assert pts == [(0.0, 0.0), (1.0, 1.0)]
    jump = np.nonzero(np.diff(curve.fpr))[0][0]
    assert THRESHOLDS[::-1][jump] == 0.5


def test_two_thirds():
    scores, truth = [0.9, 0.8, 0.3, 0.1], [1, 1, 0, 1]
    assert pair_auc(scores, truth) == pytest.approx(2 / 3)
    assert roc_curve(scores, truth).auc == pytest.approx(2 / 3, abs=1e-12)


def test_single_class_is_nan():
    with pytest.warns(IndexWarning):
        curve = roc_for_country(np.array([0.2, 0.4]), np.array([1, 1]), np.array([True, True]))
    assert np.isnan(curve.auc)


def test_valid_mask_restricts(rng):
    scores = rng.integers(0, 101, 30) / 100
    truth = rng.random(30) < 0.5
    valid = rng.random(30) < 0.6
    assert roc_curve(scores, truth, valid).auc == pytest.approx(pair_auc(scores[valid], truth[valid]), abs=1e-12)


def test_curve_shape(rng):
    scores = rng.random(50)
    truth = rng.random(50) < 0.4
    c = roc_curve(scores, truth)
    assert c.fpr.size == 102
    assert (c.fpr[0], c.tpr[0]) == (0.0, 0.0) and (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    x, y = c.fpr, c.tpr
    assert c.auc == pytest.approx(sum((x[i + 1] - x[i]) * (y[i + 1] + y[i]) / 2 for i in range(101)), abs=1e-10)


def test_pair_oracle_random_rows(rng):
    for _ in range(50):
        n = int(rng.integers(4, 120))
        scores = rng.integers(0, 101, n) / 100
        truth = rng.random(n) < rng.uniform(0.2, 0.8)
        truth[0], truth[1] = True, False
        assert roc_curve(scores, truth).auc == pytest.approx(pair_auc(scores, truth), abs=1e-9)


def test_relabel_within_threshold_gaps(rng):
    scores = rng.integers(1, 100, 40) / 100 + 0.003
    truth = rng.random(40) < 0.5
    truth[:2] = [True, False]
    moved = scores + rng.uniform(0, 0.005, 40)  # stays strictly inside (k/100, (k+1)/100)
    assert roc_curve(scores, truth).auc == roc_curve(moved, truth).auc


def test_country_aucs_nan_row():
    mbar = np.array([[0.9, 0.1], [0.5, 0.5]])
    truth = np.array([[1, 0], [1, 1]])
    with pytest.warns(IndexWarning):
        out = country_aucs(mbar, truth, np.ones((2, 2), bool))
    assert out[0] == 1.0 and np.isnan(out[1])


def test_threshold_product_matrix():
    m = threshold_product_matrix(np.array([[0.2, 0.5, 0.9]]), 0.5)
    assert m.tolist() == [[0, 1, 1]]


def test_ftot_no_positives():
    # N_p = 4, P_p = 0; two negatives scored 0.7 so fpr = 0.5 for t <= 0.7
    mbar_T = np.array([[0.7, 0.7, 0.1, 0.0]])
    table = product_ftot(mbar_T, np.zeros((1, 4), bool), np.ones((1, 4), bool))
    assert table.positives[0] == 0 and table.negatives[0] == 4
    assert table.ftot[0, 70] == 0.5
    assert table.ftot[0, 71] == 0.0


def test_ftot_formula_oracle(rng):
    P, C = 6, 119
    mbar_T = rng.random((P, C))
    truth_T = rng.random((P, C)) < 0.3
    valid_T = rng.random((P, C)) < 0.9
    table = product_ftot(mbar_T, truth_T, valid_T)
    for p in range(P):
        Pp = int((truth_T[p] & valid_T[p]).sum())
        Np = int((~truth_T[p] & valid_T[p]).sum())
        for k, t in enumerate(THRESHOLDS):
            fp = int(((mbar_T[p] >= t) & ~truth_T[p] & valid_T[p]).sum())
            fpr = fp / Np
            assert table.ftot[p, k] == pytest.approx(fpr * Np / (Pp + Np), abs=1e-15)
        assert table.ftot_mean[p] == pytest.approx(table.ftot[p].mean(), abs=1e-15)
    assert np.all((table.ftot >= 0) & (table.ftot <= 1))


def test_ftot_zero_negatives_warns():
    with pytest.warns(IndexWarning):
        table = product_ftot(np.array([[0.9, 0.2]]), np.ones((1, 2), bool), np.ones((1, 2), bool))
    assert np.all(table.ftot == 0)


def test_country_weights_reference_loop(rng):
    P, C = 15, 9
    mhat_T = (rng.random((P, C)) < 0.4).astype(np.int8)
    mhat_T[:, 0] = 0
    fbar = rng.random(P)
    with pytest.warns(IndexWarning):
        w = country_weights(mhat_T, fbar)
    assert np.isnan(w[0])
    for c in range(1, C):
        num = sum(mhat_T[p, c] * fbar[p] for p in range(P))
        den = sum(mhat_T[p, c] for p in range(P))
        assert w[c] == pytest.approx(num / den, abs=1e-12)


def test_uniform_weights():
    w = country_weights(np.ones((4, 3), np.int8), np.full(4, 0.3))
    assert np.allclose(w, 0.3)


def test_money_examples():
    assert money([1.0], [1.0]).money[0] == 0.0
    assert money([0.37], [0.0]).money[0] == 1.0
    assert money([0.8], [0.3]).money[0] == pytest.approx(0.76)


def test_money_monotone():
    auc = np.linspace(0.1, 1, 10)
    assert np.all(np.diff(money(auc, np.full(10, 0.4)).money) < 0)
    assert np.all(np.diff(money(np.full(10, 0.7), auc).money) < 0)


def test_money_index_bounds(rng):
    C, P = 12, 10
    mbar = rng.integers(0, 101, (C, P)) / 100
    truth = rng.random((C, P)) < 0.4
    valid = np.ones((C, P), bool)
    mhat_T = (rng.random((P, C)) < 0.5).astype(np.int8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IndexWarning)
        scores, table = money_index(mbar, truth, valid, mbar.T.copy(), truth.T.copy(), valid.T.copy(), mhat_T)
    ok = ~np.isnan(scores.money)
    assert ok.any()
    assert np.all((scores.money[ok] >= 0) & (scores.money[ok] <= 1))
    np.testing.assert_array_equal(scores.money, 1.0 - scores.weight * scores.auc)
