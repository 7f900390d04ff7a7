"""Dense matrix primitives for nuclear-norm completion.

Index sets are represented as boolean masks with the matrix's shape. The
helpers also accept a list of ``(row, col)`` pairs or a ``(rows, cols)``
tuple of index arrays and convert them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

RANK_EPS = 1e-12
SMALL_MATRIX = 500


@dataclass
class SvdFactors:
    left_vectors: np.ndarray   # C x R
    singular_values: np.ndarray
    right_vectors: np.ndarray  # P x R

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.singular_values > RANK_EPS))

    def reconstruct(self, shrink: float = 0.0) -> np.ndarray:
        s = np.maximum(self.singular_values - shrink, 0.0)
        return (self.left_vectors * s) @ self.right_vectors.T


def as_mask(observed, shape) -> np.ndarray:
    """Normalize an index set to a boolean mask of ``shape``."""
    if isinstance(observed, np.ndarray) and observed.dtype == bool:
        if observed.shape != tuple(shape):
            raise ContractViolation(f"mask shape {observed.shape} != matrix shape {tuple(shape)}")
        return observed
    mask = np.zeros(shape, dtype=bool)
    if isinstance(observed, tuple) and len(observed) == 2 and np.ndim(observed[0]) == 1:
        rows, cols = (np.asarray(a, dtype=int) for a in observed)
    else:
        pairs = np.asarray(list(observed), dtype=int).reshape(-1, 2)
        rows, cols = pairs[:, 0], pairs[:, 1]
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]):
        raise ContractViolation(f"observed index out of bounds for shape {tuple(shape)}")
    mask[rows, cols] = True
    return mask


def project(values, observed) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mask = as_mask(observed, values.shape)
    return np.where(mask, values, 0.0)


def project_complement(values, observed) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mask = as_mask(observed, values.shape)
    return np.where(mask, 0.0, values)


def nuclear_norm(Y) -> float:
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return 0.0
    return float(np.linalg.svd(Y, compute_uv=False).sum())


def full_svd(Y) -> SvdFactors:
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    return SvdFactors(U, s, Vt.T)


def _truncate(f: SvdFactors, threshold: float) -> SvdFactors:
    r = int(np.count_nonzero(f.singular_values > threshold))
    return SvdFactors(f.left_vectors[:, :r], f.singular_values[:r], f.right_vectors[:, :r])


def partial_svd(Y, threshold: float, *, tol: float = 1e-10, oversample: int = 8,
                rank_guess: int | None = None, start: np.ndarray | None = None,
                max_iter: int = 500) -> SvdFactors:
    """Singular triplets of ``Y`` with singular value above ``threshold``.

    Block subspace iteration with Rayleigh-Ritz extraction. The tracked
    block grows until it contains a converged triplet at or below the
    threshold; once it would exceed half the smaller dimension, or the
    iteration stalls, a full SVD is used instead. A triplet counts as
    converged when ``||Y v - s u|| <= tol * s_max``.

    ``start`` (P x k) seeds the right subspace, e.g. with the right vectors
    of a previous solve; the remaining columns come from a fixed-seed
    Gaussian block, so results are deterministic.
    """
    Y = np.asarray(Y, dtype=float)
    m, n = Y.shape
    r = min(m, n)
    k = max(1, rank_guess if rank_guess is not None else min(r, 6))
    rng = np.random.default_rng(0)
    while True:
        if k > r // 2:
            return _truncate(full_svd(Y), threshold)
        b = min(r, k + oversample)
        V = rng.standard_normal((n, b))
        if start is not None and start.size:
            j = min(b, start.shape[1])
            V[:, :j] = start[:, :j]
        V, _ = np.linalg.qr(V)
        grow = False
        for _ in range(max_iter):
            Q, _ = np.linalg.qr(Y @ V)
            Ub, s, Vt = np.linalg.svd(Q.T @ Y, full_matrices=False)
            V = Vt.T
            U = Q @ Ub
            above = int(np.count_nonzero(s > threshold))
            if above >= k:
                grow = True
                break
            check = above + 1
            res = np.linalg.norm(Y @ V[:, :check] - U[:, :check] * s[:check], axis=0)
            if np.all(res <= tol * max(s[0], RANK_EPS)):
                return SvdFactors(U[:, :above], s[:above], V[:, :above])
        if not grow:
            return _truncate(full_svd(Y), threshold)
        start = V
        k = 2 * k


def shrink_svd(Y, lam: float, method: str = "auto", rank_guess: int | None = None,
               start: np.ndarray | None = None) -> SvdFactors:
    """Factors of the soft-thresholded matrix (singular values already shrunk)."""
    Y = np.asarray(Y, dtype=float)
    if lam < 0:
        raise ContractViolation(f"lambda must be >= 0, got {lam}")
    if not np.all(np.isfinite(Y)):
        raise ContractViolation("matrix has non-finite entries")
    if method == "auto":
        method = "full" if min(Y.shape) <= SMALL_MATRIX else "partial"
    if method == "full":
        f = _truncate(full_svd(Y), lam)
    elif method == "partial":
        f = partial_svd(Y, lam, rank_guess=rank_guess, start=start)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    return SvdFactors(f.left_vectors, f.singular_values - lam, f.right_vectors)


def soft_threshold_svd(Y, lam: float, method: str = "auto") -> np.ndarray:
    """``U diag((s - lam)_+) V^T`` for the SVD ``Y = U diag(s) V^T``."""
    return shrink_svd(Y, lam, method=method).reconstruct()
