import numpy as np
import pytest

from mcmoney.errors import ContractViolation, NumericalFailure
from mcmoney.soft_impute import MaskedMatrix, SolverConfig, objective, solve, solve_path
from mcmoney.svt import soft_threshold_svd
from mcmoney.synthetic import low_rank_matrix


def _instance(rng, shape=(30, 20), rank=3, p_obs=0.7):
    A = rng.standard_normal((shape[0], rank)) @ rng.standard_normal((rank, shape[1]))
    A += 0.1 * rng.standard_normal(shape)
    return MaskedMatrix(A, rng.random(shape) < p_obs)


def test_large_lambda_zero_after_one_iteration(rng):
    data = _instance(rng)
    res = solve(data, SolverConfig(lam=1e6))
    assert res.converged and res.iterations_used == 1
    assert np.all(res.completed == 0)


def test_fully_observed_lambda_zero(rng):
    A = rng.standard_normal((6, 5))
    res = solve(MaskedMatrix(A, np.ones_like(A, bool)), SolverConfig(lam=0.0))
    assert res.converged
    np.testing.assert_allclose(res.completed, A, atol=1e-6)


def test_empty_observed_rejected():
    with pytest.raises(ContractViolation):
        solve(MaskedMatrix(np.ones((2, 2)), np.zeros((2, 2), bool)), SolverConfig(lam=1.0))


def test_config_validation():
    with pytest.raises(ContractViolation):
        SolverConfig(lam=-1)
    with pytest.raises(ContractViolation):
        SolverConfig(lam=1, tolerance=0)
    with pytest.raises(ContractViolation):
        SolverConfig(lam=1, max_iterations=0)


def test_nonfinite_iterate_names_iteration():
    data = MaskedMatrix(np.array([[1e308, 1e308], [1e308, 0.0]]), np.array([[True, True], [True, False]]))
    with pytest.raises((NumericalFailure, ContractViolation)):
        solve(data, SolverConfig(lam=0.0, warm_start=np.full((2, 2), np.inf)))


def test_objective_trivial(rng):
    A = rng.standard_normal((4, 3))
    mask = rng.random((4, 3)) < 0.6
    mask[0, 0] = True
    data = MaskedMatrix(A, mask)
    assert objective(data, np.where(mask, A, 7.0) * 0 + A, 0.0) == 0.0
    assert objective(data, np.zeros_like(A), 0.0) == pytest.approx(0.5 * np.sum(A[mask] ** 2))


def test_objective_scalar_oracle(rng):
    A = rng.standard_normal((4, 3))
    Z = rng.standard_normal((4, 3))
    mask = rng.random((4, 3)) < 0.5
    lam = 0.7
    fit = 0.0
    for i in range(4):
        for j in range(3):
            if mask[i, j]:
                fit += (A[i, j] - Z[i, j]) ** 2
    # nuclear norm as sqrt of eigenvalues of Z^T Z
    ev = np.linalg.eigvalsh(Z.T @ Z)
    expect = 0.5 * fit + lam * np.sqrt(np.clip(ev, 0, None)).sum()
    assert objective(MaskedMatrix(A, mask), Z, lam) == pytest.approx(expect, rel=1e-10)


def test_objective_monotone_and_fixed_point(rng):
    for _ in range(5):
        data = _instance(rng)
        lam = rng.uniform(0.5, 5)
        res = solve(data, SolverConfig(lam=lam, debug=True))
        tr = np.array(res.objective_trace)
        assert np.all(np.diff(tr) <= 1e-8)
        assert res.converged
        Z = res.completed
        step = soft_threshold_svd(np.where(data.observed, data.values, Z), lam)
        assert np.linalg.norm(Z - step) / max(1.0, np.linalg.norm(Z)) < 1e-4
        # trace agrees with an independent evaluation of the objective
        assert tr[-1] == pytest.approx(objective(data, Z, lam), rel=1e-9)


def test_warm_start_equivalence(rng):
    data = _instance(rng)
    cold = solve(data, SolverConfig(lam=2.0))
    near = solve(data, SolverConfig(lam=2.5))
    warm = solve(data, SolverConfig(lam=2.0, warm_start=near.completed))
    assert objective(data, warm.completed, 2.0) == pytest.approx(objective(data, cold.completed, 2.0), abs=1e-6)


def test_solve_path_warm_matches_cold(rng):
    data = _instance(rng, shape=(20, 15))
    grid = [0.5, 1.0, 2.0, 4.0]
    cold = solve_path(data, grid)
    warm = solve_path(data, grid, warm_start=True)
    for lam, a, b in zip(grid, cold, warm):
        assert objective(data, a.completed, lam) == pytest.approx(objective(data, b.completed, lam), abs=1e-6)


def test_deterministic(rng):
    data = _instance(rng)
    a = solve(data, SolverConfig(lam=1.3))
    b = solve(data, SolverConfig(lam=1.3))
    assert np.array_equal(a.completed, b.completed)


def test_max_iterations_cap(rng):
    res = solve(_instance(rng), SolverConfig(lam=0.01, max_iterations=3))
    assert res.iterations_used == 3 and not res.converged


def test_rank2_recovery_vs_column_mean():
    rng = np.random.default_rng(7)
    A = low_rank_matrix(60, 40, 2, seed=7)
    test = rng.random(A.shape) < 0.3
    known = ~test
    val = known & (rng.random(A.shape) < 0.2)
    train = known & ~val
    grid = [2.0 ** ((k - 1) / 2) for k in range(1, 31)]
    path = solve_path(MaskedMatrix(A, train), grid)
    val_rmse = [np.sqrt(np.mean((r.completed - A)[val] ** 2)) for r in path]
    best = path[int(np.argmin(val_rmse))].completed
    rmse = np.sqrt(np.mean((best - A)[test] ** 2))
    col_mean = np.nanmean(np.where(known, A, np.nan), axis=0)
    baseline = np.sqrt(np.mean((np.broadcast_to(col_mean, A.shape) - A)[test] ** 2))
    assert rmse < 0.3 * baseline
