"""Tests for the divergence-based prior estimators and the theta search."""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from modules.core import (
    BasisMoments,
    BetaVector,
    Dataset,
    basis_moments,
    build_basis,
    compute_beta,
    median_distance,
    standardize_dataset
)
from modules.data_io import SyntheticSpec, generate_synthetic, population_pen_l1
from modules.divergences import DivergenceName, DivergenceSpec, conjugate_values
from modules.errors import InvalidParameterError, SolverConvergenceError
from modules.estimators import (
    Method,
    SolverConfig,
    ThetaGrid,
    borrow_informative_choices,
    criterion_curve,
    default_theta_grid,
    dual_estimate,
    dual_value,
    estimate_prior,
    kkt_residuals,
    l1_qp_estimate,
    maximize_dual,
    parse_method,
    parse_theta_grid,
    pen_l1_alpha,
    pen_l1_estimate,
    select_theta,
    solve_l1_qp
)
from modules.model_selection import CVConfig, HyperparamChoice, prepare_workspace, select_hyperparams

PEN_KL = DivergenceSpec(DivergenceName.KL, penalized=True)
PEN_PE = DivergenceSpec(DivergenceName.PEARSON, penalized=True)
PEN_L1 = DivergenceSpec(DivergenceName.L1, penalized=True)


def standardized_problem(seed, n=30, gamma=0.25, prior=0.5):
    data, _ = generate_synthetic(SyntheticSpec(gamma=gamma, prior=prior, n=n, n_prime=n, seed=seed))
    standardized, _ = standardize_dataset(data)
    basis = build_basis(standardized, median_distance(standardized), max_centers=20, seed=seed)
    return standardized, basis


class TestThetaGrid:

    def test_default_grid(self):
        grid = default_theta_grid()
        assert len(grid) == 101
        assert grid.values[0] == 0.0 and grid.values[-1] == 1.0
        assert grid.values[37] == pytest.approx(0.37)

    def test_parse(self):
        assert parse_theta_grid("0:1:0.1").values == pytest.approx(tuple(i / 10 for i in range(11)))
        assert len(parse_theta_grid("0.2:0.6:0.05")) == 9

    @pytest.mark.parametrize("text", ["0:1", "a:b:c", "0:1:0", "1:0:0.1", "0:2:0.5", "0.5:0.5:0.1"])
    def test_invalid_specs(self, text):
        with pytest.raises(InvalidParameterError):
            parse_theta_grid(text)

    def test_must_be_strictly_ascending(self):
        with pytest.raises(InvalidParameterError):
            ThetaGrid((0.1, 0.1, 0.2))

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            ThetaGrid(())


class TestMethodNames:

    def test_parse(self):
        assert parse_method("PEN-L1") is Method.PEN_L1
        assert parse_method("sb") is Method.SB

    def test_unknown(self):
        with pytest.raises(InvalidParameterError):
            parse_method("pen-hellinger")


class TestPenL1Analytic:

    def test_small_example(self):
        solution = pen_l1_alpha(BetaVector(values=np.array([0.2, -0.1]), theta=0.3), 0.5)
        np.testing.assert_allclose(solution.alpha, [0.4, 0.0])
        assert solution.estimate == pytest.approx(0.04 / 0.5 - 0.3 + 1.0)
        assert math.isinf(solution.c)

    def test_closed_form_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            b = int(rng.integers(1, 20))
            theta = float(rng.random())
            lam = float(10 ** rng.uniform(-3, 1))
            values = rng.uniform(-1.0, theta, size=b)
            solution = pen_l1_alpha(BetaVector(values=values, theta=theta), lam)
            closed = float(np.sum(np.maximum(0.0, values) * values)) / lam - theta + 1.0
            assert solution.estimate == pytest.approx(closed, rel=1e-12, abs=1e-12)
            assert solution.estimate == pytest.approx(float(solution.alpha @ values) - theta + 1.0, rel=1e-12, abs=1e-12)

    def test_alpha_minimizes_the_primal(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(-0.5, 0.5, size=6)
        lam = 0.3
        solution = pen_l1_alpha(BetaVector(values=values, theta=0.5), lam)
        for _ in range(200):
            other = np.maximum(0.0, solution.alpha + rng.normal(scale=0.1, size=6))
            assert 0.5 * lam * other @ other - other @ values >= solution.objective - 1e-12

    def test_theta_zero_gives_one(self, tiny_data):
        basis = build_basis(tiny_data, 1.0)
        solution = pen_l1_estimate(0.0, tiny_data, basis, 0.1)
        np.testing.assert_array_equal(solution.alpha, 0.0)
        assert solution.estimate == pytest.approx(1.0)

    @pytest.mark.parametrize("lam", [0.0, -1.0])
    def test_lambda_must_be_positive(self, tiny_data, lam):
        basis = build_basis(tiny_data, 1.0)
        with pytest.raises(InvalidParameterError):
            pen_l1_estimate(0.5, tiny_data, basis, lam)

    def test_theta_out_of_range(self, tiny_data):
        basis = build_basis(tiny_data, 1.0)
        with pytest.raises(InvalidParameterError):
            pen_l1_estimate(1.5, tiny_data, basis, 1.0)

    def test_convex_in_theta_with_frozen_basis(self, overlap_data):
        standardized, _ = standardize_dataset(overlap_data)
        basis = build_basis(standardized, median_distance(standardized))
        curve = criterion_curve(Method.PEN_L1, standardized, basis, 0.1, default_theta_grid())
        values = np.array([v for _, v in curve])
        assert np.all(values[:-2] - 2 * values[1:-1] + values[2:] >= -1e-8)


    def test_never_exceeds_the_population_value_beyond_sampling_error(self):
        data, _ = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.7, n=10_000, n_prime=10_000, seed=3))
        basis = build_basis(data, median_distance(data), seed=3)
        moments = basis_moments(data, basis)
        for theta in (0.2, 0.5, 0.7):
            solution = pen_l1_estimate(theta, data, basis, 1.0, moments=moments)
            assert solution.estimate <= population_pen_l1(theta, 0.7, 0.25) + 0.05


class TestL1QuadraticProgram:

    def test_single_constraint_by_hand(self):
        result = solve_l1_qp(np.array([10.0]), np.array([[1.0]]), lam=1.0, c=1.0)
        np.testing.assert_allclose(result.alpha, [2.0])
        np.testing.assert_allclose(result.multipliers, [8.0])
        assert result.primal_violation == pytest.approx(0.0, abs=1e-12)

    def test_inactive_constraints_reduce_to_the_analytic_solution(self):
        for seed in range(50):
            data, basis = standardized_problem(seed)
            theta = 0.2 + 0.6 * (seed % 7) / 6
            qp = l1_qp_estimate(theta, data, basis, lam=0.5, c=1e6)
            analytic = pen_l1_estimate(theta, data, basis, lam=0.5)
            assert qp.estimate == pytest.approx(analytic.estimate, rel=1e-9, abs=1e-9)
            np.testing.assert_allclose(qp.alpha, analytic.alpha, rtol=1e-9, atol=1e-12)

    def test_active_constraints_satisfy_kkt(self):
        data, basis = standardized_problem(3, gamma=0.0)
        solution = l1_qp_estimate(0.9, data, basis, lam=0.01, c=0.5)
        assert solution.feasible
        assert np.all(solution.alpha >= 0.0)
        assert solution.stationarity_residual <= 1e-6
        assert solution.complementarity_residual <= 1e-6
        assert np.any(solution.multipliers > 0.0)

        analytic = pen_l1_estimate(0.9, data, basis, lam=0.01)
        assert solution.objective >= analytic.objective - 1e-12

    def test_matches_generic_optimizer(self):
        rng = np.random.default_rng(4)
        beta = rng.uniform(-0.2, 0.6, size=3)
        design = rng.uniform(0.1, 1.0, size=(5, 3))
        lam, c = 0.2, 0.3

        result = solve_l1_qp(beta, design, lam, c)

        constraints = [
            {"type": "ineq", "fun": lambda a: (1 + c) - design @ a, "jac": lambda a: -design},
            {"type": "ineq", "fun": lambda a: a, "jac": lambda a: np.eye(3)}
        ]
        reference = minimize(
            lambda a: 0.5 * lam * a @ a - a @ beta, np.zeros(3),
            jac=lambda a: lam * a - beta, constraints=constraints, method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 1000}
        )
        np.testing.assert_allclose(result.alpha, reference.x, atol=1e-5)

    def test_kkt_residuals_of_the_optimum_vanish(self):
        residuals = kkt_residuals(
            np.array([2.0]), np.array([8.0]), np.array([10.0]), np.array([[1.0]]), 1.0, 1.0
        )
        assert residuals == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)

    def test_constrained_objective_never_beats_the_unconstrained_one(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            b = int(rng.integers(1, 6))
            beta = BetaVector(values=rng.uniform(-0.5, 1.0, size=b), theta=0.5)
            design = rng.uniform(0.05, 1.0, size=(8, b))
            lam = float(10 ** rng.uniform(-2, 0))
            c = float(rng.uniform(0.1, 2.0))
            qp = solve_l1_qp(beta.values, design, lam, c)
            qp_objective = 0.5 * lam * qp.alpha @ qp.alpha - qp.alpha @ beta.values
            assert qp_objective >= pen_l1_alpha(beta, lam).objective - 1e-9

    def test_warm_start_reaches_the_same_solution(self):
        data, basis = standardized_problem(3, gamma=0.0)
        design = basis.evaluate(data.unlabeled)
        previous = solve_l1_qp(compute_beta(0.85, data, basis).values, design, 0.01, 0.5)
        beta = compute_beta(0.9, data, basis).values

        cold = solve_l1_qp(beta, design, 0.01, 0.5)
        warm = solve_l1_qp(beta, design, 0.01, 0.5, initial_multipliers=previous.multipliers)
        np.testing.assert_allclose(warm.alpha, cold.alpha, atol=1e-6)
        assert warm.primal_violation <= 1e-8
        assert max(warm.stationarity, warm.complementarity) <= 1e-6

    def test_many_violated_constraints(self):
        data, basis = standardized_problem(5, n=150, gamma=0.0)
        solution = l1_qp_estimate(0.9, data, basis, lam=0.01, c=0.5)
        assert solution.feasible
        assert solution.stationarity_residual <= 1e-6
        assert solution.complementarity_residual <= 1e-6
        assert 0 < np.count_nonzero(solution.multipliers) < 150

    def test_slope_must_be_positive(self, tiny_data):
        basis = build_basis(tiny_data, 1.0)
        with pytest.raises(InvalidParameterError):
            l1_qp_estimate(0.5, tiny_data, basis, lam=1.0, c=0.0)


class TestDualAscent:

    def test_penalized_kl_reduces_to_the_analytic_alpha(self, tiny_data):
        standardized, _ = standardize_dataset(tiny_data)
        basis = build_basis(standardized, 1.0)
        moments = basis_moments(standardized, basis)
        theta, lam = 0.8, 0.5
        alpha, value, _ = maximize_dual(PEN_KL, theta, moments.positive_mean, basis.evaluate(standardized.unlabeled), lam)

        beta = theta * moments.positive_mean - moments.unlabeled_mean
        expected_alpha = np.maximum(0.0, beta) / lam
        np.testing.assert_allclose(alpha, expected_alpha, atol=1e-10)
        assert value == pytest.approx(0.5 * expected_alpha @ beta - theta + 1.0, abs=1e-10)

    def test_penalized_pearson_objective_identity(self, tiny_data):
        standardized, _ = standardize_dataset(tiny_data)
        basis = build_basis(standardized, 1.0, max_centers=5)
        moments = basis_moments(standardized, basis)
        design = basis.evaluate(standardized.unlabeled)
        theta, lam = 0.5, 10.0

        alpha, value, _ = maximize_dual(PEN_PE, theta, moments.positive_mean, design, lam)
        r_unl = design @ alpha - 1.0
        assert np.all((r_unl >= -1.0) & (r_unl <= 0.0))

        r_pos = basis.evaluate(standardized.positives) @ alpha - 1.0
        closed = theta * r_pos.mean() - np.mean(0.5 * r_unl ** 2 + r_unl) - 0.5 * lam * alpha @ alpha
        assert value == pytest.approx(closed, abs=1e-10)
        assert value == pytest.approx(dual_value(PEN_PE, theta, alpha, moments.positive_mean, design, lam), abs=1e-12)

    def test_best_iterate_beats_zero(self, tiny_data):
        standardized, _ = standardize_dataset(tiny_data)
        basis = build_basis(standardized, 1.0)
        moments = basis_moments(standardized, basis)
        design = basis.evaluate(standardized.unlabeled)
        alpha, value, _ = maximize_dual(PEN_PE, 0.6, moments.positive_mean, design, 1.0)
        assert np.all(alpha >= 0.0)
        assert value >= dual_value(PEN_PE, 0.6, np.zeros(basis.b), moments.positive_mean, design, 1.0)

    def test_penalized_l1_is_routed_to_the_analytic_path(self, tiny_data):
        basis = build_basis(tiny_data, 1.0)
        routed = dual_estimate(PEN_L1, 0.4, tiny_data, basis, 0.3)
        direct = pen_l1_estimate(0.4, tiny_data, basis, 0.3)
        assert routed.estimate == pytest.approx(direct.estimate)

    def test_unpenalized_divergence_rejected(self, tiny_data):
        basis = build_basis(tiny_data, 1.0)
        with pytest.raises(InvalidParameterError):
            dual_estimate(DivergenceSpec(DivergenceName.KL, penalized=False), 0.4, tiny_data, basis, 0.3)

    def test_objective_is_the_regularized_primal_value(self, tiny_data):
        standardized, _ = standardize_dataset(tiny_data)
        basis = build_basis(standardized, 1.0)
        solution = dual_estimate(PEN_KL, 0.8, standardized, basis, 0.5)
        alpha = solution.alpha
        assert solution.objective == pytest.approx(
            0.5 * 0.5 * alpha @ alpha - alpha @ solution.beta.values, abs=1e-12
        )

    def test_two_coefficient_problem_matches_a_dense_grid(self):
        positive_mean = np.array([[0.9, 0.2], [0.8, 0.4], [0.7, 0.3]]).mean(axis=0)
        design = np.array([[0.3, 0.6], [0.2, 0.5], [0.4, 0.7]])
        theta, lam = 0.9, 0.5
        _, value, _ = maximize_dual(PEN_PE, theta, positive_mean, design, lam)

        axis = np.linspace(0.0, 5.0, 501)
        grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
        r_unl = grid @ design.T - 1.0
        values = (
            theta * (grid @ positive_mean - 1.0)
            - conjugate_values(PEN_PE, r_unl).mean(axis=1)
            - 0.5 * lam * np.sum(grid ** 2, axis=1)
        )
        assert value == pytest.approx(values.max(), abs=1e-4)

    def test_one_step_solver_on_a_hard_problem_does_not_report_convergence(self):
        moments = BasisMoments(positive_mean=np.array([0.9, 0.8]), unlabeled_mean=np.array([0.1, 0.2]))
        design = np.array([[0.1, 0.2], [0.2, 0.1]])
        with pytest.raises(SolverConvergenceError):
            maximize_dual(PEN_PE, 1.0, moments.positive_mean, design, 1e-3, SolverConfig(max_iter=20, tol=1e-12))


class TestSelectTheta:

    def test_smallest_theta_wins_ties(self):
        assert select_theta([(0.0, 1.0), (0.1, 0.0), (0.2, 0.0)]) == (0.1, 1)

    def test_nan_never_wins(self):
        assert select_theta([(0.0, float("nan")), (0.5, 3.0)]) == (0.5, 1)

    def test_empty_curve(self):
        with pytest.raises(InvalidParameterError):
            select_theta([])


class TestBorrowInformativeChoices:

    @staticmethod
    def choice(sigma, informative=True):
        return HyperparamChoice(sigma=sigma, lam=0.1, cv_score=0.0, informative=informative)

    def test_nearest_informative_choice_wins(self):
        choices = [
            self.choice(1.0, False), self.choice(2.0), self.choice(1.0, False),
            self.choice(1.0, False), self.choice(3.0)
        ]
        borrowed = borrow_informative_choices(choices)
        assert [c.sigma for c in borrowed] == [2.0, 2.0, 2.0, 3.0, 3.0]

    def test_larger_theta_wins_equal_distance(self):
        choices = [self.choice(2.0), self.choice(1.0, False), self.choice(3.0)]
        assert borrow_informative_choices(choices)[1].sigma == 3.0

    def test_nothing_informative(self):
        choices = [self.choice(1.0, False), self.choice(4.0, False)]
        assert borrow_informative_choices(choices) == choices


class TestEstimatePrior:

    def test_separated_classes(self, separated_data, fast_cv, coarse_grid):
        estimate = estimate_prior(Method.PEN_L1, separated_data, coarse_grid, fast_cv, seed=0)
        assert 0.3 <= estimate.theta_hat <= 0.7
        assert len(estimate.curve) == len(coarse_grid)
        assert len(estimate.hyperparams_by_theta) == len(coarse_grid)

    def test_deterministic(self, overlap_data, fast_cv, coarse_grid):
        first = estimate_prior(Method.PEN_L1, overlap_data, coarse_grid, fast_cv, seed=5)
        second = estimate_prior(Method.PEN_L1, overlap_data, coarse_grid, fast_cv, seed=5)
        assert first.to_dict() == second.to_dict()

    def test_global_cv_freezes_hyperparameters(self, overlap_data, fast_cv, coarse_grid):
        estimate = estimate_prior(Method.PEN_L1, overlap_data, coarse_grid, fast_cv, global_cv=True)
        assert len(set(estimate.hyperparams_by_theta)) == 1

    def test_progress_callback(self, overlap_data, fast_cv, coarse_grid):
        calls = []
        estimate_prior(
            Method.PEN_L1, overlap_data, coarse_grid, fast_cv,
            progress_callback=lambda i, total, message: calls.append((i, total))
        )
        assert calls[0] == (1, 11) and calls[-1] == (11, 11)

    def test_finite_slope_l1(self, overlap_data, fast_cv, coarse_grid):
        estimate = estimate_prior(Method.L1, overlap_data, coarse_grid, fast_cv, c=1.0)
        assert 0.0 <= estimate.theta_hat <= 1.0
        assert estimate.method == "l1"

    def test_baseline_methods_are_not_handled_here(self, overlap_data):
        with pytest.raises(InvalidParameterError):
            estimate_prior(Method.PE, overlap_data)

    def test_result_dict(self, overlap_data, fast_cv, coarse_grid):
        payload = estimate_prior(Method.PEN_L1, overlap_data, coarse_grid, fast_cv, seed=2).to_dict()
        assert payload["method"] == "pen-l1"
        assert payload["seed"] == 2
        assert set(payload["hyperparams"]) == {"sigma", "lambda"}
        assert len(payload["curve"]) == 11

    @pytest.mark.parametrize("text, expected", [("0:1:0.1", 1.0), ("0:0.8:0.1", 0.8)])
    def test_identical_samples_select_the_largest_grid_point(self, fast_cv, text, expected):
        points = np.random.default_rng(12).normal(size=(30, 2))
        data = Dataset(positives=points, unlabeled=points)
        estimate = estimate_prior(Method.PEN_L1, data, parse_theta_grid(text), fast_cv)
        assert estimate.theta_hat == pytest.approx(expected)

    def test_uninformative_thetas_borrow_the_nearest_informative_pair(self, separated_data, fast_cv, coarse_grid):
        estimate = estimate_prior(Method.PEN_L1, separated_data, coarse_grid, fast_cv, seed=0)

        standardized, _ = standardize_dataset(separated_data)
        workspace = prepare_workspace(standardized, fast_cv, 0)
        choices = [select_hyperparams(theta, standardized, fast_cv, workspace=workspace) for theta in coarse_grid]
        assert not choices[0].informative
        assert any(choice.informative for choice in choices)
        assert estimate.hyperparams_by_theta == [(c.sigma, c.lam) for c in borrow_informative_choices(choices)]

    def test_global_cv_anchors_at_the_first_informative_theta(self, separated_data, fast_cv, coarse_grid):
        estimate = estimate_prior(Method.PEN_L1, separated_data, coarse_grid, fast_cv, seed=0, global_cv=True)

        standardized, _ = standardize_dataset(separated_data)
        workspace = prepare_workspace(standardized, fast_cv, 0)
        first = next(
            choice for choice in (
                select_hyperparams(theta, standardized, fast_cv, workspace=workspace) for theta in coarse_grid
            ) if choice.informative
        )
        assert set(estimate.hyperparams_by_theta) == {(first.sigma, first.lam)}
        assert 0.3 <= estimate.theta_hat <= 0.7

    @pytest.mark.slow
    def test_finite_slope_l1_at_full_size(self):
        data, _ = generate_synthetic(SyntheticSpec(gamma=0.75, prior=0.7, n=400, n_prime=400, seed=0))
        start = time.perf_counter()
        estimate = estimate_prior(Method.L1, data, seed=0, c=1.0)
        elapsed = time.perf_counter() - start
        assert 0.0 <= estimate.theta_hat <= 1.0
        assert elapsed < 600.0

    @pytest.mark.slow
    def test_curve_tracks_one_minus_theta_below_the_prior(self):
        data, _ = generate_synthetic(SyntheticSpec(gamma=0.25, prior=0.7, n=2000, n_prime=2000, seed=0))
        grid = ThetaGrid((0.1, 0.2, 0.3, 0.4, 0.5, 0.6))
        estimate = estimate_prior(Method.PEN_L1, data, grid, CVConfig(), seed=0)
        for theta, value in estimate.curve:
            assert abs(value - (1.0 - theta)) <= 0.05
