"""MONEY complexity index from matrix-completion vote surrogates.

Per country: ROC/AUC of the mean-vote row against the true incidence row.
Per product (transposed run): false-positive mass ``ftot`` averaged over the
threshold grid. The country weight is the mean ``ftot`` over the products
the product-side majority surrogate marks as competitive, and
``MONEY = 1 - weight * AUC``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

THRESHOLDS = np.arange(101) / 100.0


class IndexWarning(UserWarning):
    pass


@dataclass
class RocCurve:
    thresholds: np.ndarray  # ascending 0.00..1.00
    fpr: np.ndarray         # ordered by descending threshold, leading (0, 0) anchor
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass
class ProductWeightTable:
    ftot: np.ndarray        # P x T
    ftot_mean: np.ndarray   # P
    positives: np.ndarray   # P_p
    negatives: np.ndarray   # N_p


@dataclass
class MoneyScores:
    auc: np.ndarray
    weight: np.ndarray
    money: np.ndarray


def _trapezoid(x, y) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def roc_curve(scores, truth, valid=None, thresholds=THRESHOLDS) -> RocCurve:
    """Threshold sweep with prediction ``score >= t``.

    Points run from the ``t > 1`` anchor ``(0, 0)`` through ``t = 1, 0.99, .., 0``.
    AUC is NaN when the valid cells lack either class.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth).astype(bool).ravel()
    if valid is not None:
        valid = np.asarray(valid, dtype=bool).ravel()
        scores, truth = scores[valid], truth[valid]
    thresholds = np.asarray(thresholds, dtype=float)
    pos = int(truth.sum())
    neg = truth.size - pos
    t_desc = thresholds[::-1]
    hits = scores[None, :] >= t_desc[:, None]
    tp = (hits & truth).sum(axis=1)
    fp = (hits & ~truth).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tpr = np.concatenate([[0.0], tp / pos]) if pos else np.full(t_desc.size + 1, np.nan)
        fpr = np.concatenate([[0.0], fp / neg]) if neg else np.full(t_desc.size + 1, np.nan)
    auc = _trapezoid(fpr, tpr) if pos and neg else np.nan
    return RocCurve(thresholds, fpr, tpr, auc)


def roc_for_country(mbar_row, truth_row, valid_mask) -> RocCurve:
    curve = roc_curve(mbar_row, truth_row, valid_mask)
    if np.isnan(curve.auc):
        warnings.warn("ROC undefined: valid cells contain a single class", IndexWarning, stacklevel=2)
    return curve


def country_aucs(mbar, truth, valid):
    """AUC for every row; NaN rows warned about once in aggregate."""
    out = np.empty(mbar.shape[0])
    for c in range(mbar.shape[0]):
        out[c] = roc_curve(mbar[c], truth[c], valid[c]).auc
    if np.isnan(out).any():
        warnings.warn(f"{int(np.isnan(out).sum())} rows have an undefined AUC", IndexWarning, stacklevel=2)
    return out


def threshold_product_matrix(mbar_T, t: float) -> np.ndarray:
    return (np.asarray(mbar_T) >= t).astype(np.int8)


def product_ftot(mbar_T, truth_T, valid_T, thresholds=THRESHOLDS) -> ProductWeightTable:
    """``ftot[p, t] = fpr[p, t] * N_p / (P_p + N_p)`` over valid cells of each product row.

    That product equals ``FP[p, t] / (P_p + N_p)``, which is what is computed;
    rows with ``N_p = 0`` therefore get ``ftot = 0``.
    """
    mbar_T = np.asarray(mbar_T, dtype=float)
    truth_T = np.asarray(truth_T, dtype=bool)
    valid_T = np.asarray(valid_T, dtype=bool)
    thresholds = np.asarray(thresholds, dtype=float)
    neg_cells = valid_T & ~truth_T
    positives = (valid_T & truth_T).sum(axis=1)
    negatives = neg_cells.sum(axis=1)
    total = positives + negatives
    if np.any(negatives == 0):
        warnings.warn(f"{int((negatives == 0).sum())} products have no true negatives; ftot set to 0",
                      IndexWarning, stacklevel=2)
    fp = np.stack([((mbar_T >= t) & neg_cells).sum(axis=1) for t in thresholds], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ftot = np.where(total[:, None] > 0, fp / np.maximum(total, 1)[:, None], 0.0)
    return ProductWeightTable(ftot, ftot.mean(axis=1), positives, negatives)


def country_weights(mhat_T, ftot_mean) -> np.ndarray:
    """Mean of ``ftot_mean`` over products with ``mhat_T[p, c] == 1``; NaN when there are none."""
    mhat_T = np.asarray(mhat_T, dtype=float)
    ftot_mean = np.asarray(ftot_mean, dtype=float)
    support = mhat_T.sum(axis=0)
    num = ftot_mean @ mhat_T
    if np.any(support == 0):
        warnings.warn(f"{int((support == 0).sum())} countries have no predicted-competitive product",
                      IndexWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(support > 0, num / support, np.nan)


def money(auc, weight) -> MoneyScores:
    auc = np.asarray(auc, dtype=float)
    weight = np.asarray(weight, dtype=float)
    return MoneyScores(auc, weight, 1.0 - weight * auc)


def money_index(mbar, truth, valid, mbar_T, truth_T, valid_T, mhat_T):
    """Full country-level MONEY computation; returns ``(MoneyScores, ProductWeightTable)``."""
    aucs = country_aucs(mbar, truth, valid)
    table = product_ftot(mbar_T, truth_T, valid_T)
    w = country_weights(mhat_T, table.ftot_mean)
    return money(aucs, w), table
