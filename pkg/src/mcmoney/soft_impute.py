"""Soft Impute for nuclear-norm regularized matrix completion.

Minimizes ``0.5 * ||P_obs(A) - P_obs(Z)||_F^2 + lam * ||Z||_*`` by iterating
``Z <- S_lam(P_obs(A) + P_obs^perp(Z))`` from ``Z = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .svt import as_mask, nuclear_norm, shrink_svd


@dataclass
class MaskedMatrix:
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.observed = as_mask(self.observed, self.values.shape)


@dataclass
class SolverConfig:
    lam: float
    tolerance: float = 1e-9
    max_iterations: int = 1500
    warm_start: np.ndarray | None = None
    svd_method: str = "auto"
    debug: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ContractViolation(f"lambda must be >= 0, got {self.lam}")
        if not self.tolerance > 0:
            raise ContractViolation(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ContractViolation(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class CompletionResult:
    completed: np.ndarray
    iterations_used: int
    converged: bool
    final_relative_change: float
    rank: int = 0
    objective_trace: list[float] = field(default_factory=list)


def objective(observed: MaskedMatrix, Z, lam: float) -> float:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != observed.values.shape:
        raise ContractViolation(f"shape mismatch {Z.shape} vs {observed.values.shape}")
    resid = (observed.values - Z)[observed.observed]
    return 0.5 * float(resid @ resid) + lam * nuclear_norm(Z)


def _relative_change(new, old) -> float:
    denom = float(np.sum(old * old))
    num = float(np.sum((new - old) ** 2))
    if denom == 0.0:
        # first step from zero: converged only on a zero-to-zero move
        return 0.0 if num == 0.0 else np.inf
    return num / denom


def solve(observed: MaskedMatrix, config: SolverConfig) -> CompletionResult:
    mask = observed.observed
    if not mask.any():
        raise ContractViolation("observed index set is empty")
    A_obs = np.where(mask, observed.values, 0.0)
    if config.warm_start is not None:
        Z_old = np.array(config.warm_start, dtype=float)
        if Z_old.shape != A_obs.shape:
            raise ContractViolation("warm_start shape does not match the data")
    else:
        Z_old = np.zeros_like(A_obs)
    trace = []
    start, rank = None, None
    change = np.inf
    Z_new = Z_old
    for it in range(1, config.max_iterations + 1):
        filled = np.where(mask, A_obs, Z_old)
        if not np.all(np.isfinite(filled)):
            raise NumericalFailure(f"non-finite iterate at iteration {it}", iteration=it)
        f = shrink_svd(filled, config.lam, method=config.svd_method, rank_guess=rank, start=start)
        Z_new = f.reconstruct()
        if not np.all(np.isfinite(Z_new)):
            raise NumericalFailure(f"non-finite iterate at iteration {it}", iteration=it)
        start, rank = f.right_vectors, max(f.rank, 1)
        if config.debug:
            r = (A_obs - Z_new)[mask]
            trace.append(0.5 * float(r @ r) + config.lam * float(f.singular_values.sum()))
        change = _relative_change(Z_new, Z_old)
        if change < config.tolerance:
            return CompletionResult(Z_new, it, True, change, f.rank, trace)
        Z_old = Z_new
    return CompletionResult(Z_new, config.max_iterations, False, change, f.rank, trace)


def solve_path(observed: MaskedMatrix, lambdas, tolerance: float = 1e-9, max_iterations: int = 1500,
               warm_start: bool = False, svd_method: str = "auto") -> list[CompletionResult]:
    """Solve for every lambda; results come back in the order of ``lambdas``.

    With ``warm_start`` the grid is swept from the largest lambda down and
    each solve starts from the previous solution.
    """
    lambdas = list(lambdas)
    results: list[CompletionResult | None] = [None] * len(lambdas)
    order = sorted(range(len(lambdas)), key=lambda i: -lambdas[i]) if warm_start else range(len(lambdas))
    prev = None
    for i in order:
        cfg = SolverConfig(lambdas[i], tolerance, max_iterations,
                           warm_start=prev if warm_start else None, svd_method=svd_method)
        results[i] = solve(observed, cfg)
        prev = results[i].completed
    return results
