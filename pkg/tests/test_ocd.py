import numpy as np
import pytest

from odreg.errors import DegenerateColumnError
from odreg.ocd import (
    compute_lambda_grid,
    coordinate_update,
    fit_path,
    kkt_violation,
    path_objective,
    soft_threshold,
)


def _random_instance(rng, j, n=200):
    X = rng.normal(size=(n, j))
    X -= X.mean(axis=0)
    beta_true = rng.normal(size=j) * (rng.uniform(size=j) < 0.7)
    y = X @ beta_true + 0.3 * rng.normal(size=n)
    return X.T @ X, X.T @ y


@pytest.mark.parametrize("v, lam, expected", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0)])
def test_soft_threshold(v, lam, expected):
    assert soft_threshold(v, lam) == expected


def test_soft_threshold_vectorized():
    np.testing.assert_allclose(soft_threshold(np.array([3.0, -3.0, 0.5]), 1.0), [2.0, -2.0, 0.0])


def test_coordinate_update_scalar_cases():
    G = np.eye(1)
    free = np.array([-np.inf]), np.array([np.inf])
    reg = np.array([True])
    assert coordinate_update(G, np.array([2.0]), np.zeros(1), 0, 1.0, *free, reg) == 1.0
    lo, hi = np.array([0.0]), np.array([0.5])
    assert coordinate_update(G, np.array([2.0]), np.zeros(1), 0, 1.0, lo, hi, reg) == 0.5
    assert coordinate_update(G, np.array([2.0]), np.zeros(1), 0, 3.0, *free, reg) == 0.0


def test_coordinate_update_degenerate_column():
    with pytest.raises(DegenerateColumnError):
        coordinate_update(
            np.zeros((1, 1)), np.array([1.0]), np.zeros(1), 0, 0.0,
            np.array([-np.inf]), np.array([np.inf]), np.array([True]),
        )


def test_lambda_grid_log_spacing():
    grid = compute_lambda_grid(np.array([5.0, -7.0, 2.0]), eps_lambda=1e-3, count=3)
    assert grid.lambda_max == 7.0
    np.testing.assert_allclose(grid.values, [7.0, 7.0 * 10**-1.5, 0.007], rtol=1e-12)


def test_lambda_grid_respects_mask():
    grid = compute_lambda_grid(np.array([5.0, -7.0]), np.array([True, False]))
    assert grid.lambda_max == 5.0


def test_lambda_grid_homogeneous():
    H = np.array([1.5, -0.3, 4.0])
    g1 = compute_lambda_grid(H, count=20)
    g2 = compute_lambda_grid(3.7 * H, count=20)
    np.testing.assert_allclose(g2.values, 3.7 * g1.values, rtol=1e-12)


def test_lambda_grid_endpoints_and_monotone():
    grid = compute_lambda_grid(np.array([2.0, 9.0]), eps_lambda=1e-4, count=100)
    assert grid.values[0] == grid.lambda_max
    assert grid.values[-1] == pytest.approx(1e-4 * grid.lambda_max, rel=1e-12)
    assert np.all(np.diff(grid.values) < 0)


def test_lambda_grid_degenerate_response():
    grid = compute_lambda_grid(np.array([0.0, 0.0, 3.0]), np.array([True, True, False]))
    assert grid.count == 1
    np.testing.assert_array_equal(grid.values, [0.0])


def test_lambda_grid_requires_regularized_entry():
    with pytest.raises(ValueError):
        compute_lambda_grid(np.array([1.0]), np.array([False]))


def test_path_orthonormal_closed_form():
    rng = np.random.default_rng(0)
    H = rng.normal(size=6) * 3
    grid = compute_lambda_grid(H, count=10)
    lo = np.full(6, -1.5)
    hi = np.full(6, 1.5)
    path = fit_path(np.eye(6), H, grid, lower=lo, upper=hi, tol=1e-12)
    for ell, lam in enumerate(grid.values):
        expected = np.clip(soft_threshold(H, lam), lo, hi)
        np.testing.assert_allclose(path.betas[ell], expected, atol=1e-12)


def test_path_end_matches_dense_solve():
    # smallest lambda at eps * lambda_max should be near the unpenalized solution
    rng = np.random.default_rng(1)
    n, j = 100, 5
    X = rng.normal(size=(n, j))
    X -= X.mean(axis=0)
    y = X @ rng.normal(size=j) + 0.1 * rng.normal(size=n)
    G, H = X.T @ X, X.T @ y
    grid = compute_lambda_grid(H, eps_lambda=1e-8, count=60)
    path = fit_path(G, H, grid, tol=1e-10, max_iter=5000)
    dense = np.linalg.solve(G, H)
    np.testing.assert_allclose(path.betas[-1], dense, atol=1e-4)


def test_path_beats_random_feasible_perturbations():
    rng = np.random.default_rng(2)
    G, H = _random_instance(rng, 3)
    lo = np.array([-2.0, -2.0, 0.0])
    hi = np.array([2.0, 2.0, 1.0])
    reg = np.ones(3, dtype=bool)
    grid = compute_lambda_grid(H, reg, eps_lambda=1e-3, count=5)
    path = fit_path(G, H, grid, lower=lo, upper=hi, regularized=reg, tol=1e-10, max_iter=5000)
    for ell, lam in enumerate(grid.values):
        beta = path.betas[ell]
        base = path_objective(G, H, beta, lam, reg)
        steps = rng.normal(size=(10_000, 3)) * rng.choice([1e-3, 1e-2, 0.3], size=(10_000, 1))
        trials = np.clip(beta + steps, lo, hi)
        objs = 0.5 * np.einsum("ij,jk,ik->i", trials, G, trials) - trials @ H
        objs += lam * np.abs(trials).sum(axis=1)
        assert base <= objs.min() + 1e-9


def test_all_regularized_zero_at_lambda_max():
    rng = np.random.default_rng(3)
    n = 150
    X = rng.normal(size=(n, 4))
    X -= X.mean(axis=0)
    X = np.hstack([np.ones((n, 1)), X])
    y = 2.0 + X[:, 1] - 0.5 * X[:, 3] + 0.1 * rng.normal(size=n)
    G, H = X.T @ X, X.T @ y
    reg = np.array([False, True, True, True, True])
    grid = compute_lambda_grid(H, reg, count=30)
    path = fit_path(G, H, grid, regularized=reg, tol=1e-10)
    np.testing.assert_allclose(path.betas[0, 1:], 0.0, atol=1e-12)
    assert path.betas[0, 0] != 0.0


def test_warm_start_independence():
    rng = np.random.default_rng(4)
    G, H = _random_instance(rng, 6)
    grid = compute_lambda_grid(H, count=25)
    cold = fit_path(G, H, grid, tol=1e-10, max_iter=5000)
    warm = fit_path(G, H, grid, warm=cold, tol=1e-10, max_iter=5000)
    np.testing.assert_allclose(warm.betas, cold.betas, atol=1e-8)


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    G, H = _random_instance(rng, 5)
    grid = compute_lambda_grid(H, count=15)
    path = fit_path(G, H, grid, tol=1e-10, max_iter=5000)
    perm = rng.permutation(5)
    grid_p = compute_lambda_grid(H[perm], count=15)
    np.testing.assert_allclose(grid_p.values, grid.values, rtol=1e-12)
    path_p = fit_path(G[np.ix_(perm, perm)], H[perm], grid_p, tol=1e-10, max_iter=5000)
    np.testing.assert_allclose(path_p.betas, path.betas[:, perm], atol=1e-8)


def test_kkt_certificate_on_random_instances():
    rng = np.random.default_rng(6)
    for _ in range(25):
        j = rng.integers(2, 9)
        G, H = _random_instance(rng, int(j))
        reg = rng.uniform(size=j) < 0.8
        if not reg.any():
            reg[0] = True
        grid = compute_lambda_grid(H, reg, count=12)
        path = fit_path(G, H, grid, regularized=reg, tol=1e-9, max_iter=5000)
        assert path.converged.all()
        for ell, lam in enumerate(grid.values):
            v = kkt_violation(G, H, path.betas[ell], lam, reg, path.lower, path.upper)
            assert v <= 1e-9 * (1 + lam) * 10 + 1e-7


def test_degenerate_column_pinned_to_zero():
    G = np.diag([1.0, 0.0, 2.0])
    H = np.array([1.0, 5.0, 2.0])
    grid = compute_lambda_grid(H, count=8)
    path = fit_path(G, H, grid, tol=1e-10)
    np.testing.assert_array_equal(path.betas[:, 1], 0.0)


def test_shuffled_order_reaches_same_solution():
    rng = np.random.default_rng(7)
    G, H = _random_instance(rng, 5)
    grid = compute_lambda_grid(H, count=10)
    base = fit_path(G, H, grid, tol=1e-11, max_iter=5000)
    shuf = fit_path(G, H, grid, tol=1e-11, max_iter=5000, order_seed=123)
    np.testing.assert_allclose(shuf.betas, base.betas, atol=1e-8)


def test_nonconverged_lambda_is_flagged_not_fatal():
    rng = np.random.default_rng(8)
    G, H = _random_instance(rng, 6)
    grid = compute_lambda_grid(H, count=10)
    path = fit_path(G, H, grid, tol=1e-14, max_iter=1)
    assert not path.converged.all()
    assert path.betas.shape == (10, 6)
