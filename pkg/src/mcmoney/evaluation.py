"""Global diagnostics and ranking comparisons."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats

from .errors import ConfigError, ContractViolation
from .money import RocCurve, roc_curve

# ascending: lower score ranks first (more complex)
RANK_DIRECTION = {
    "money": "ascending",
    "genepy": "descending",
    "genepy_mc": "descending",
}


class EvaluationWarning(UserWarning):
    pass


@dataclass
class RankComparison:
    tau: float
    p_value: float
    n: int


@dataclass
class ConfusionMatrix8:
    counts: np.ndarray
    edges_a: np.ndarray
    edges_b: np.ndarray


def global_roc(mbar, M, valid) -> RocCurve:
    """One ROC over all valid cells, with a country-independent threshold."""
    return roc_curve(np.asarray(mbar), np.asarray(M), np.asarray(valid, dtype=bool))


def balanced_accuracy(predictions, truth, valid=None) -> float:
    pred = np.asarray(predictions).astype(bool).ravel()
    truth = np.asarray(truth).astype(bool).ravel()
    if valid is not None:
        keep = np.asarray(valid, dtype=bool).ravel()
        pred, truth = pred[keep], truth[keep]
    pos, neg = truth.sum(), (~truth).sum()
    if pos == 0 or neg == 0:
        return float("nan")
    tpr = (pred & truth).sum() / pos
    tnr = (~pred & ~truth).sum() / neg
    return float((tpr + tnr) / 2.0)


def kendall_tau(x, y) -> RankComparison:
    """Tau-b with the tie-corrected normal approximation for the p-value.

    Pairs with a NaN on either side are dropped first.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ContractViolation("kendall_tau needs equal-length vectors")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    n = int(x.size)
    if n < 3:
        raise ContractViolation(f"kendall_tau needs at least 3 complete pairs, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return RankComparison(float("nan"), float("nan"), n)
    res = stats.kendalltau(x, y, variant="b", method="asymptotic")
    return RankComparison(float(res.statistic), float(res.pvalue), n)


def _octile_classes(v: np.ndarray):
    lo, hi = v.min(), v.max()
    r = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    edges = np.quantile(r, np.arange(1, 8) / 8.0)
    return np.searchsorted(edges, r, side="right"), edges


def confusion_8class(scores_a, scores_b) -> ConfusionMatrix8:
    """Cross-tabulate octile classes; rows from ``scores_a`` (truth), columns from ``scores_b``.

    Each vector is min-max rescaled to [0, 1] and binned by its own octiles.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation("score vectors must cover the same entities")
    keep = ~(np.isnan(a) | np.isnan(b))
    a, b = a[keep], b[keep]
    if min(np.unique(a).size, np.unique(b).size) < 8:
        warnings.warn("fewer than 8 distinct scores; some octile classes are empty", EvaluationWarning, stacklevel=2)
    ca, ea = _octile_classes(a)
    cb, eb = _octile_classes(b)
    counts = np.zeros((8, 8), dtype=np.int64)
    np.add.at(counts, (ca, cb), 1)
    return ConfusionMatrix8(counts, ea, eb)


def ranking(scores, direction: str) -> np.ndarray:
    """Indices of the scored (non-NaN) entities, best first. Ties keep input order."""
    s = np.asarray(scores, dtype=float)
    idx = np.flatnonzero(~np.isnan(s))
    if direction == "ascending":
        key = s[idx]
    elif direction == "descending":
        key = -s[idx]
    else:
        raise ConfigError(f"unknown ranking direction {direction!r}")
    return idx[np.argsort(key, kind="stable")]


def top_x_ratio(scores, labels, group, x: int, direction: str = "descending") -> float:
    """Share of ``group`` members among the top ``x`` ranked entities."""
    group = set(group)
    if not group:
        raise ConfigError("group is empty")
    order = ranking(scores, direction)
    if x > order.size:
        raise ContractViolation(f"x = {x} exceeds the {order.size} scored entities")
    top = {labels[i] for i in order[:x]}
    return len(top & group) / len(group)


def load_group(path=None) -> list[str]:
    """Country codes from a one-per-line file; the bundled G19+5 list by default."""
    if path is None:
        text = resources.files("mcmoney").joinpath("data/g19plus5.txt").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    codes = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    return [c for c in codes if c]
