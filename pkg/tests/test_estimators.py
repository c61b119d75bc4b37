"""Tests for the regularized weight estimator, baseline, and trust rule."""

import math

import numpy as np
import pytest

from labelshift import (
    ConfusionEstimate,
    Deltas,
    InvalidDelta,
    InvalidParams,
    LabelDist,
    NonConvergence,
    SingularConfusion,
    SolverOptions,
    WeightEstimate,
    bbsl_weights,
    build_b,
    epsilon_theta,
    estimate_confusion,
    estimate_label_dist,
    importance_weights,
    kkt_residual,
    lambda_rule,
    make_shift,
    prox_solve,
    regularized_weights,
    sample_labels,
    select_theta,
    solve_theta_rho,
)
from labelshift.distributions import ShiftSpec


def diagonal_confusion(p: np.ndarray, diag: float = 0.8) -> np.ndarray:
    """Population joint confusion with the given per-class accuracy."""
    k = p.size
    m = np.zeros((k, k))
    for j in range(k):
        col = np.full(k, (1.0 - diag) / (k - 1))
        col[j] = diag
        m[:, j] = p[j] * col
    return m / m.sum()


def tiny_deltas(delta: float = 0.1) -> Deltas:
    return Deltas(
        delta_c=1e-8, delta_b=1e-8, delta_q=1e-8, delta_p=1e-8,
        delta=delta, n_weight=1, n_target=1,
    )


class TestProxSolver:
    def test_rho_zero_recovers_linear_solve(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(4) * 6)
        c = diagonal_confusion(p)
        theta = rng.uniform(-0.5, 0.5, size=4)
        b = c @ theta
        out = solve_theta_rho(c, b, 0.0, SolverOptions())
        np.testing.assert_allclose(out, theta, atol=1e-6)

    def test_full_shrinkage(self):
        rng = np.random.default_rng(1)
        p = rng.dirichlet(np.ones(3) * 6)
        c = diagonal_confusion(p)
        b = c @ np.array([0.4, -0.3, 0.1])
        rho = np.linalg.norm(c.T @ b) * 1.0001
        out = solve_theta_rho(c, b, rho, SolverOptions())
        np.testing.assert_array_equal(out, 0.0)

    def test_marginal_shrinkage_is_nonzero(self):
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.ones(3) * 6)
        c = diagonal_confusion(p)
        b = c @ np.array([0.4, -0.3, 0.1])
        rho = np.linalg.norm(c.T @ b) * 0.9
        out = solve_theta_rho(c, b, rho, SolverOptions())
        assert np.linalg.norm(out) > 0

    def test_matches_fine_lattice_on_inner_objective(self):
        # 3-d brute force on 0.5*||C t - b||^2 + rho*||t||
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(3) * 8)
        c = diagonal_confusion(p)
        theta = np.array([0.05, -0.03, 0.01])
        b = c @ theta
        rho = 2e-4
        out = solve_theta_rho(c, b, rho, SolverOptions())
        ax = np.arange(-0.08, 0.08, 1e-3)
        grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
        vals = 0.5 * np.sum((grid @ c.T - b) ** 2, axis=1) + rho * np.linalg.norm(grid, axis=1)
        best = grid[np.argmin(vals)]
        assert np.linalg.norm(out - best) < 1e-3 + math.sqrt(3) * 1e-3

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            p = rng.dirichlet(np.ones(5))
            c = diagonal_confusion(p, diag=float(rng.uniform(0.4, 0.9)))
            b = c @ rng.uniform(-1, 1, size=5)
            rho = float(rng.uniform(0, 0.05))
            res = prox_solve(c, b, rho, SolverOptions())
            assert np.all(np.diff(res.objectives) <= 1e-12)

    def test_kkt_residual_contract(self):
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.ones(4) * 5)
        c = diagonal_confusion(p)
        b = c @ rng.uniform(-0.5, 0.5, size=4)
        for rho in (0.0, 1e-4, 1e-2):
            out = solve_theta_rho(c, b, rho, SolverOptions())
            assert kkt_residual(c, b, rho, out) <= 1e-8

    def test_backtracking_agrees_with_fixed(self):
        rng = np.random.default_rng(6)
        p = rng.dirichlet(np.ones(4) * 5)
        c = diagonal_confusion(p)
        b = c @ rng.uniform(-0.5, 0.5, size=4)
        fixed = solve_theta_rho(c, b, 1e-3, SolverOptions(step_rule="fixed"))
        back = solve_theta_rho(c, b, 1e-3, SolverOptions(step_rule="backtracking"))
        np.testing.assert_allclose(fixed, back, atol=1e-6)

    def test_nonconvergence_carries_best_iterate(self):
        rng = np.random.default_rng(7)
        p = rng.dirichlet(np.ones(4) * 5)
        c = diagonal_confusion(p, diag=0.5)
        b = c @ rng.uniform(-0.5, 0.5, size=4)
        with pytest.raises(NonConvergence) as info:
            solve_theta_rho(c, b, 1e-5, SolverOptions(max_iters=3))
        assert info.value.best is not None
        assert info.value.best.shape == (4,)


class TestSelectTheta:
    def test_zero_rhs_gives_zero(self):
        p = np.full(4, 0.25)
        c = diagonal_confusion(p)
        deltas = Deltas.compute(4, 1000, 1000, 0.1)
        theta, rho = select_theta(c, np.zeros(4), deltas, SolverOptions())
        np.testing.assert_array_equal(theta, 0.0)
        assert rho > 0

    def test_population_consistency(self):
        # exact C, b with radii -> 0 recovers the true shift
        rng = np.random.default_rng(8)
        p = rng.dirichlet(np.ones(5) * 6)
        q = rng.dirichlet(np.ones(5) * 6)
        c = diagonal_confusion(p)
        theta = q / p - 1.0
        b = c @ theta
        out, _ = select_theta(c, b, tiny_deltas(), SolverOptions())
        np.testing.assert_allclose(out, theta, atol=1e-4)

    def test_regularization_shrinks_vs_plain_inverse(self):
        # near-singular confusion: the selected estimate is never longer than
        # the raw inverse solution
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(5))
        c = diagonal_confusion(p, diag=0.9)
        c[:, 0] = 0.999 * c[:, 1] + 0.001 * c[:, 0]  # force near-collinearity
        c = c / c.sum()
        theta = rng.uniform(-1, 1, size=5)
        b = c @ theta + rng.normal(scale=1e-3, size=5)
        deltas = Deltas.compute(5, 2000, 2000, 0.1)
        out, _ = select_theta(c, b, deltas, SolverOptions())
        assert np.linalg.norm(out) <= np.linalg.norm(np.linalg.solve(c, b)) + 1e-9

    def test_ties_prefer_larger_rho(self):
        p = np.full(3, 1 / 3)
        c = diagonal_confusion(p)
        deltas = Deltas.compute(3, 1000, 1000, 0.1)
        opts = SolverOptions(rho_grid_max_exponent=5)
        _, rho = select_theta(c, np.zeros(3), deltas, opts)
        expected_top = 2.0 ** 6 * deltas.delta_c * deltas.delta_b
        np.testing.assert_allclose(rho, expected_top)


class TestBBSL:
    def test_diagonal_confusion_recovers_ratio(self):
        p = np.array([0.2, 0.3, 0.5])
        q = np.array([0.5, 0.2, 0.3])
        c_hat = ConfusionEstimate(matrix=np.diag(p), n_samples=100)
        est = bbsl_weights(c_hat, LabelDist(q))
        np.testing.assert_allclose(est.weights, q / p)
        assert est.method == "bbsl"

    def test_perfect_classifier_tweak_one(self):
        k = 10
        c_hat = ConfusionEstimate(matrix=np.eye(k) / k, n_samples=1000)
        q = make_shift(ShiftSpec(kind="tweak_one", rho=0.5, seed=3), k)
        est = bbsl_weights(c_hat, q)
        expected = importance_weights(q, LabelDist(np.full(k, 0.1)))
        np.testing.assert_allclose(est.weights, expected)

    def test_negative_entries_clipped(self):
        c = np.array([[0.30, 0.20], [0.20, 0.30]])
        q = LabelDist(np.array([0.05, 0.95]))
        est = bbsl_weights(ConfusionEstimate(matrix=c, n_samples=10), q)
        assert np.all(est.weights >= 0)
        raw = np.linalg.solve(c, q.probs)
        assert raw.min() < 0  # the clip actually did something

    def test_singular_confusion_rejected(self):
        c = np.array([[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(SingularConfusion):
            bbsl_weights(ConfusionEstimate(matrix=c, n_samples=4), LabelDist(np.array([0.5, 0.5])))


class TestRegularizedWeights:
    def test_lambda_zero(self):
        est = regularized_weights(np.array([4.0, -0.4]), 0.0)
        np.testing.assert_array_equal(est.weights, 1.0)
        assert est.method == "rlls"

    def test_lambda_one_tweak(self):
        theta = np.array([4.0] + [-4.0 / 9] * 9)
        est = regularized_weights(theta, 1.0)
        np.testing.assert_allclose(est.weights, [5.0] + [1 - 4 / 9] * 9)

    def test_clip(self):
        est = regularized_weights(np.array([-1.5, 0.5]), 1.0)
        np.testing.assert_array_equal(est.weights, [0.0, 1.5])

    def test_invalid_lambda(self):
        with pytest.raises(InvalidParams):
            regularized_weights(np.zeros(2), 1.5)

    def test_json_roundtrip_keys(self):
        import json

        est = regularized_weights(np.array([0.5, -0.5]), 0.7)
        payload = json.loads(est.to_json())
        assert set(payload) == {"theta", "weights", "lambda", "rho", "method"}


class TestEpsilonTheta:
    def test_sigma_min_large_limit(self):
        big = epsilon_theta(1000, 1000, 0.5, 2.0, 0.1, 1e9, 10)
        assert big < 1e-6

    def test_theta_zero_drops_k_terms(self):
        n_p, n_q, beta, delta, smin, k = 4000, 3000, 0.5, 0.1, 0.2, 10
        n_w = (1 - beta) * n_p
        expected = (
            math.sqrt(36 * math.log(3 / delta) / n_w)
            + math.sqrt(36 * math.log(3 / delta) / n_q)
        ) / smin
        np.testing.assert_allclose(
            epsilon_theta(n_p, n_q, beta, 0.0, delta, smin, k), expected, rtol=1e-12
        )

    def test_pinned_regression_value(self):
        # frozen from a spreadsheet-style evaluation of the closed form
        value = epsilon_theta(10000, 10000, 0.5, 4.216, 0.1, 0.1, 10)
        np.testing.assert_allclose(value, 9.165515608316023, rtol=1e-10)

    def test_delta_cap(self):
        with pytest.raises(InvalidDelta):
            epsilon_theta(1000, 1000, 0.5, 1.0, 0.6, 0.1, 10)


class TestLambdaRule:
    def test_huge_target_count(self):
        assert lambda_rule(10**12, 10000, 4.216, 0.08) == 1.0

    def test_sigma_below_critical(self):
        assert lambda_rule(10**12, 100, 4.216, 0.05) == 0.0  # 1/sqrt(100) = 0.1 > 0.05

    def test_threshold_boundary(self):
        # threshold for theta_max=4.216, sigma=0.08, n_p=1e4 is ~11.48
        assert lambda_rule(11, 10000, 4.216, 0.08) == 0.0
        assert lambda_rule(12, 10000, 4.216, 0.08) == 1.0

    def test_definition_level(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            n_p = int(rng.integers(10, 10**6))
            n_q = int(rng.integers(1, 10**6))
            theta_max = float(rng.uniform(0.1, 10))
            smin = float(rng.uniform(1e-3, 1.0))
            lam = lambda_rule(n_q, n_p, theta_max, smin)
            margin = smin - 1 / math.sqrt(n_p)
            should_be_one = margin > 0 and n_q >= 1 / (theta_max**2 * margin**2)
            assert lam == (1.0 if should_be_one else 0.0)

    def test_continuous_mode(self):
        lam = lambda_rule(10**9, 10**9, 4.0, 0.5, continuous=True, k=10)
        assert 0.9 < lam <= 1.0
        lam_small = lambda_rule(5, 1000, 4.0, 0.05, continuous=True, k=10)
        assert lam_small == 0.0

    def test_invalid_sigma(self):
        with pytest.raises(InvalidParams):
            lambda_rule(10, 10, 1.0, 0.0)


class TestBoundValidityMonteCarlo:
    """Estimation error stays below its radius at the stated rate."""

    def test_theta_error_bound(self):
        k, n_p, n_q, beta, delta = 5, 4000, 4000, 0.5, 0.1
        p = np.array([0.3, 0.25, 0.2, 0.15, 0.1])
        c = diagonal_confusion(p)
        sigma_min = float(np.linalg.svd(c, compute_uv=False)[-1])
        q = p[::-1].copy()
        theta = q / p - 1.0
        q_pred = c @ (q / p)
        eps = epsilon_theta(n_p, n_q, beta, float(np.linalg.norm(theta)), delta, sigma_min, k)
        n_w = int((1 - beta) * n_p)
        flat = c.reshape(-1)
        violations = 0
        trials = 200
        for trial in range(trials):
            rng = np.random.default_rng((43, trial))
            idx = rng.choice(flat.size, size=n_w, p=flat)
            est = estimate_confusion(idx // k, idx % k, k)
            preds_t = sample_labels(LabelDist(q_pred / q_pred.sum()), n_q, rng)
            b_hat = build_b(estimate_label_dist(preds_t, k), est)
            deltas = Deltas.compute(k, n_w, n_q, delta)
            out, _ = select_theta(est, b_hat, deltas, SolverOptions())
            if np.linalg.norm(out - theta) > eps:
                violations += 1
        assert violations / trials <= delta


class TestShrinkageDominance:
    def test_rlls_beats_bbsl_under_ill_conditioning(self):
        # h0 that mostly emits one class: sigma_min(C-hat) <= 0.02 by construction
        k, n = 10, 2000
        rlls_mse, bbsl_mse, sigmas = [], [], []
        for trial in range(20):
            rng = np.random.default_rng((17, trial))
            p = make_shift(ShiftSpec(kind="tweak_one", rho=0.8, seed=trial), k).probs
            c = 0.9 * np.outer(np.eye(k)[0], p) + 0.1 * np.diag(p)
            c = c / c.sum()
            w = np.full(k, 0.1) / p
            q_pred = c @ w
            flat = c.reshape(-1)
            idx = rng.choice(flat.size, size=n, p=flat)
            est = estimate_confusion(idx // k, idx % k, k)
            sigmas.append(est.sigma_min)
            preds_t = sample_labels(LabelDist(q_pred / q_pred.sum()), n, rng)
            q_hat = estimate_label_dist(preds_t, k)
            b_hat = build_b(q_hat, est)
            deltas = Deltas.compute(k, n, n, 0.1)
            theta_hat, _ = select_theta(est, b_hat, deltas, SolverOptions(delta_scale=0.01))
            rlls_mse.append(np.sum((regularized_weights(theta_hat, 1.0).weights - w) ** 2))
            try:
                bbsl_mse.append(np.sum((bbsl_weights(est, q_hat).weights - w) ** 2))
            except SingularConfusion:
                bbsl_mse.append(np.inf)
        assert max(sigmas) <= 0.02
        assert np.median(rlls_mse) <= np.median(bbsl_mse)


class TestWeightEstimateInvariants:
    def test_unweighted_means_ones(self):
        est = WeightEstimate(
            theta_hat=np.zeros(3), weights=np.ones(3), lam=0.0, method="unweighted"
        )
        np.testing.assert_array_equal(est.weights, 1.0)

    def test_negative_weights_rejected(self):
        with pytest.raises(InvalidParams):
            WeightEstimate(
                theta_hat=np.zeros(2), weights=np.array([-0.1, 1.0]), lam=0.0, method="rlls"
            )
