import math
import warnings

import numpy as np
import pytest

import oracles
from homofuse.errors import ConvergenceError, DataError, UsageError
from homofuse.ocsvm import (
    auto_sigma,
    build_kernel,
    sigma_heuristic,
    solve_ocsvm,
)


def random_psd_kernel(rng, n):
    """Alternate between RBF Gram matrices and unit-diagonal Gram matrices of random vectors."""
    if rng.random() < 0.5:
        x = rng.normal(size=(n, 2)) * rng.uniform(0.2, 3.0)
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        return np.exp(-(d / rng.uniform(0.3, 3.0)) ** 2)
    b = rng.normal(size=(n, int(rng.integers(1, n + 1))))
    k = b @ b.T + 1e-9 * np.eye(n)
    s = np.sqrt(np.diag(k))
    return k / np.outer(s, s)


def test_identity_kernel_analytic():
    sol = solve_ocsvm(np.eye(3), "scholkopf", nu=0.5)
    np.testing.assert_allclose(sol.alpha, [1 / 3] * 3, rtol=0, atol=1e-8)
    assert abs(sol.objective - 1 / 6) < 1e-8
    assert abs(sol.rho - 1 / 3) < 1e-8
    np.testing.assert_allclose(sol.scores, 0.0, atol=1e-8)
    ref, fref = oracles.pg_simplex_qp(np.eye(3), 2 / 3)
    assert abs(fref - 1 / 6) < 1e-10


def test_single_point():
    sol = solve_ocsvm(np.ones((1, 1)))
    assert sol.alpha.tolist() == [1.0]
    assert sol.scores.tolist() == [0.0]


def test_matches_projected_gradient_reference():
    rng = np.random.default_rng(11)
    worst_obj = worst_kkt = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 9))
        k = random_psd_kernel(rng, n)
        nu = float(rng.choice([0.2, 0.5, 0.8, 1.0]))
        sol = solve_ocsvm(k, "scholkopf", nu=nu)
        _, fref = oracles.pg_simplex_qp(k, 1.0 / (nu * n))
        worst_obj = max(worst_obj, abs(sol.objective - fref))
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        assert abs(sol.alpha.sum() - 1) < 1e-12
        assert sol.alpha.min() >= 0 and sol.alpha.max() <= 1 / (nu * n) + 1e-15
    assert worst_obj < 1e-6
    assert worst_kkt < 1e-6


def test_paper_eq8_matches_box_reference():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        k = random_psd_kernel(rng, n)
        co = float(rng.choice([0.5, 1.0, 2.0]))
        sol = solve_ocsvm(k, "paper-eq8", co=co, nu=0.5)
        _, fref = oracles.pg_box_qp(k, 1.0 / (co * n), 0.5)
        assert abs(sol.objective - fref) < 1e-6
        assert sol.kkt_residual < 1e-6
        np.testing.assert_allclose(sol.scores, k @ sol.alpha - 0.5, atol=1e-12)


def test_nu_property():
    rng = np.random.default_rng(13)
    for _ in range(40):
        n = int(rng.integers(10, 60))
        x = np.vstack([rng.normal(size=(n - n // 5, 2)), rng.uniform(-8, 8, (n // 5, 2))])
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        nu = float(rng.uniform(0.1, 0.9))
        sol = solve_ocsvm(build_kernel(d, auto_sigma(d)), nu=nu)
        assert np.mean(sol.scores < 0) <= nu + 2 / n


def test_permutation_invariance():
    rng = np.random.default_rng(14)
    for formulation in ("scholkopf", "paper_eq8"):
        for _ in range(10):
            n = int(rng.integers(3, 30))
            x = rng.normal(size=(n, 2))
            d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
            k = build_kernel(d, auto_sigma(d))
            perm = rng.permutation(n)
            # tight tolerance so the comparison is not dominated by solver slack
            a = solve_ocsvm(k, formulation, tol=1e-10)
            b = solve_ocsvm(k[np.ix_(perm, perm)], formulation, tol=1e-10)
            np.testing.assert_allclose(b.scores, a.scores[perm], atol=1e-8)


def test_convergence_error_carries_residual():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(40, 2))
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    with pytest.raises(ConvergenceError) as exc:
        solve_ocsvm(build_kernel(d, 1.0), max_iter=1)
    assert exc.value.residual >= 1e-6


def test_parameter_checks():
    with pytest.raises(UsageError):
        solve_ocsvm(np.eye(2), nu=0.0)
    with pytest.raises(UsageError):
        solve_ocsvm(np.eye(2), co=-1.0)
    with pytest.raises(UsageError):
        solve_ocsvm(np.eye(2), formulation="lasso")


def test_kernel_values():
    d = np.array([[0.0, 2.0, np.inf], [2.0, 0.0, 1.0], [np.inf, 1.0, 0.0]])
    k = build_kernel(d, 2.0)
    assert k[0, 0] == 1.0
    assert f"{k[0, 1]:.7f}" == f"{math.exp(-1):.7f}" == "0.3678794"
    assert k[0, 2] == 0.0
    with pytest.raises(UsageError):
        build_kernel(d, 0.0)


def test_kernel_monotone_in_distance(rng):
    d = np.sort(rng.exponential(3.0, 200))
    m = np.zeros((201, 201))
    m[0, 1:] = m[1:, 0] = d
    vals = build_kernel(m, 2.5)[0, 1:]
    assert np.all(np.diff(vals) <= 0)
    np.testing.assert_allclose(vals, np.exp(-(d / 2.5) ** 2), rtol=1e-15)


def test_sigma_examples():
    # nearest distances 1, 1, 4 -> 2 * mean = 4
    d = np.array([[0, 1, 9], [1, 0, 8], [9, 8, 0.0]])
    d[2, 0] = d[0, 2] = 4.0
    d[2, 1] = d[1, 2] = 6.0
    assert sigma_heuristic(d) == 4.0
    assert sigma_heuristic(np.array([[0, 2.5], [2.5, 0]])) == 5.0
    assert sigma_heuristic(np.array([[0, 1, np.inf], [1, 0, np.inf], [np.inf, np.inf, 0]])) == 2.0


def test_sigma_degenerate_cases():
    with pytest.raises(DataError):
        sigma_heuristic(np.array([[0, np.inf], [np.inf, 0]]))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert auto_sigma(np.zeros((3, 3))) == 1.0
    assert any(issubclass(x.category, RuntimeWarning) for x in w)
