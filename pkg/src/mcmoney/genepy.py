"""GENEPY index and the related Fitness / ECI proximity matrices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data_ingest import RcaMatrix
from .errors import ContractViolation, NumericalFailure


class GenepyWarning(UserWarning):
    pass


@dataclass
class IncidenceMatrix:
    entries: np.ndarray
    countries: list[str]
    products: list[str]


@dataclass
class WeightedIncidence:
    W: np.ndarray
    country_degree: np.ndarray       # k_c
    corrected_degree: np.ndarray     # k'_p
    kept_countries: np.ndarray       # row indices into the input
    kept_products: np.ndarray


@dataclass
class GenepyResult:
    eigenvalues: np.ndarray          # (lambda_1, lambda_2), descending
    eigvec1: np.ndarray
    eigvec2: np.ndarray
    genepy: np.ndarray
    country_degree: np.ndarray | None = None
    corrected_degree: np.ndarray | None = None
    kept_countries: np.ndarray | None = None

    def expand(self, n_countries: int) -> np.ndarray:
        """GENEPY on the original country axis, NaN for dropped countries."""
        out = np.full(n_countries, np.nan)
        idx = np.arange(n_countries) if self.kept_countries is None else self.kept_countries
        out[idx] = self.genepy
        return out


def incidence_from_rca(rca: RcaMatrix) -> IncidenceMatrix:
    M = ((rca.values >= 1) & ~rca.missing).astype(np.int8)
    return IncidenceMatrix(M, list(rca.countries), list(rca.products))


def _binary(M) -> np.ndarray:
    M = np.asarray(getattr(M, "entries", M))
    if M.ndim != 2 or not np.isin(M, (0, 1)).all():
        raise ContractViolation("incidence matrix must be a 2-D 0/1 array")
    return M.astype(float)


def weighted_incidence(M) -> WeightedIncidence:
    """``W[c, p] = M[c, p] / (k_c * k'_p)`` after dropping zero-degree rows and columns."""
    M = _binary(M)
    rows = np.flatnonzero(M.sum(axis=1) > 0)
    cols = np.flatnonzero(M.sum(axis=0) > 0)
    if rows.size < M.shape[0]:
        warnings.warn(f"dropped {M.shape[0] - rows.size} countries with zero degree", GenepyWarning, stacklevel=2)
    if cols.size < M.shape[1]:
        warnings.warn(f"dropped {M.shape[1] - cols.size} products with zero degree", GenepyWarning, stacklevel=2)
    M = M[np.ix_(rows, cols)]
    k_c = M.sum(axis=1)
    k_p = (M / k_c[:, None]).sum(axis=0)
    W = M / np.outer(k_c, k_p)
    return WeightedIncidence(W, k_c, k_p, rows, cols)


def proximity(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ContractViolation("W has non-finite entries")
    N = W @ W.T
    N = (N + N.T) / 2.0
    np.fill_diagonal(N, 0.0)
    return N


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def top_eigenpairs(N, count: int = 2):
    """Largest ``count`` eigenpairs of symmetric ``N`` by algebraic value, descending."""
    N = np.asarray(N, dtype=float)
    n = N.shape[0]
    try:
        vals, vecs = scipy.linalg.eigh(N, subset_by_index=[n - count, n - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}") from exc
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vecs = np.column_stack([_fix_sign(vecs[:, i]) for i in range(count)])
    return vals, vecs


def genepy_from_eigen(vals, x1, x2) -> np.ndarray:
    l1, l2 = vals[0], vals[1]
    return (l1 * x1 ** 2 + l2 * x2 ** 2) ** 2 + 2.0 * (l1 ** 2 * x1 ** 2 + l2 ** 2 * x2 ** 2)


def genepy_scores(N) -> GenepyResult:
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or N.shape[0] != N.shape[1] or N.shape[0] < 3:
        raise ContractViolation("proximity matrix must be square with at least 3 rows")
    vals, vecs = top_eigenpairs(N, 2)
    if vals[1] < 0:
        warnings.warn(f"second eigenvalue is negative ({vals[1]:.3g})", GenepyWarning, stacklevel=2)
    x1, x2 = vecs[:, 0], vecs[:, 1]
    return GenepyResult(vals, x1, x2, genepy_from_eigen(vals, x1, x2))


def genepy(M) -> GenepyResult:
    """GENEPY for the countries (rows) of a binary incidence matrix."""
    wi = weighted_incidence(M)
    res = genepy_scores(proximity(wi.W))
    res.country_degree = wi.country_degree
    res.corrected_degree = wi.corrected_degree
    res.kept_countries = wi.kept_countries
    return res


def counterfactual_genepy(mhat) -> GenepyResult:
    """GENEPY on the majority-vote surrogate in place of the observed incidence matrix."""
    return genepy(mhat)


@dataclass
class VariantMatrices:
    N_F: np.ndarray
    N_ECI: np.ndarray
    fitness_vector: np.ndarray
    eci_vector: np.ndarray


def variant_matrices(M) -> VariantMatrices:
    """``N_F = W W^T`` (diagonal kept) and ``N_ECI`` from ``M / (k_c k_p)``.

    Returns the leading eigenvector of ``N_F`` and the second eigenvector of
    ``N_ECI``.
    """
    wi = weighted_incidence(M)
    Mk = _binary(M)[np.ix_(wi.kept_countries, wi.kept_products)]
    N_F = wi.W @ wi.W.T
    N_F = (N_F + N_F.T) / 2.0
    k_p = Mk.sum(axis=0)
    W_eci = Mk / np.outer(wi.country_degree, k_p)
    N_ECI = W_eci @ W_eci.T
    N_ECI = (N_ECI + N_ECI.T) / 2.0
    _, vf = top_eigenpairs(N_F, 1)
    count = min(3, N_ECI.shape[0])
    ve_vals, ve = top_eigenpairs(N_ECI, count)
    scale = max(abs(ve_vals[0]), 1e-300)
    gaps = np.abs(np.diff(ve_vals)) / scale
    if np.any(gaps < 1e-9):
        warnings.warn("degenerate N_ECI spectrum: second eigenvector is not unique", GenepyWarning, stacklevel=2)
    return VariantMatrices(N_F, N_ECI, vf[:, 0], ve[:, 1])
