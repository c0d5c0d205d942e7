"""Tests for the three shipped example problems."""

import numpy as np
import pytest

from regret_design.errors import DegenerateParameter, InvalidParameter, UnstableStep
from regret_design.numerics import RngStream, cross_derivative_matrix
from regret_design.problems import pandemic, pricing, quadratic

X = np.array


class TestQuadratic:
    def test_d_at_experiment_prior_mean(self):
        assert np.allclose(quadratic.quadratic_d(X([10.0, 5.0])), [1.0, -2.0])

    def test_d_zero_intercept(self):
        assert np.allclose(quadratic.quadratic_d(X([0.0, 1.0])), [1.0, 0.0])

    def test_d_matches_fd(self):
        theta = X([3.0, 2.0])
        prob = quadratic.make_problem()
        x_star = -theta[0] / theta[1]
        fd = cross_derivative_matrix(prob.evaluate, X([x_star]), theta)
        assert np.allclose(fd.ravel(), quadratic.quadratic_d(theta), atol=1e-6)

    def test_degenerate_curvature(self):
        with pytest.raises(DegenerateParameter):
            quadratic.quadratic_d(X([1.0, 0.0]))

    def test_regret_identity(self):
        # deciding x_hat under theta loses exactly (theta_1/2)(x_hat - x*)^2
        prob = quadratic.make_problem()
        rng = RngStream(8, 0).generator()
        for _ in range(200):
            theta = X([rng.uniform(-20, 20), rng.uniform(0.5, 9.0)])
            x_hat = rng.uniform(-10.0, 10.0)
            lhs = prob.evaluate(X([x_hat]), theta) - prob.evaluate(
                X([-theta[0] / theta[1]]), theta)
            assert abs(lhs - quadratic.regret_closed_form(theta, x_hat)) <= 1e-10


class TestPricing:
    def test_d_at_origin(self):
        got = pricing.pricing_d(0.0, X([0.0, 1.0]))
        assert np.allclose(got, [0.25, 0.0], atol=1e-15)

    def test_d_decays_for_unlikely_conversion(self):
        got = pricing.pricing_d(40.0, X([10.0, 1.0]))
        assert np.all(np.abs(got) < 1e-15)

    def test_d_matches_fd(self):
        theta = X([-4.0, 1.0])
        got = pricing.pricing_d(2.0, theta)
        prob = pricing.make_problem()
        fd = cross_derivative_matrix(prob.evaluate, X([2.0]), theta).ravel()
        assert np.all(np.abs(got - fd) <= 1e-5 * (1.0 + np.abs(got)))

    def test_first_order_condition_and_positive_revenue(self):
        rng = RngStream(8, 1).generator()
        for _ in range(50):
            theta = X([rng.uniform(-8, -1), rng.uniform(0.5, 2.0)])
            sol = pricing.optimal_price(theta)
            x = sol.x[0]
            c = pricing.conversion(x, theta)
            assert abs(x - 1.0 / (theta[1] * (1.0 - c))) <= 1e-8 * max(1.0, x)
            assert -sol.value > 0.0

    def test_positive_curvature_at_optimum(self):
        rng = RngStream(8, 2).generator()
        for _ in range(1000):
            theta = X([rng.uniform(-8, -1), rng.uniform(0.5, 2.0)])
            x = pricing.optimal_price(theta).x[0]
            assert pricing.curvature(x, theta) > 0.0

    def test_curvature_matches_fd(self):
        theta = X([-4.0, 1.0])
        prob = pricing.make_problem()
        for x in (1.0, 3.0, 6.0):
            h = 1e-4
            fd = (prob.evaluate(X([x + h]), theta) - 2.0 * prob.evaluate(X([x]), theta)
                  + prob.evaluate(X([x - h]), theta)) / (h * h)
            assert abs(fd - pricing.curvature(x, theta)) <= 1e-5

    def test_wrong_sign_slope_returns_endpoint(self):
        # a fitted positive-demand slope makes revenue increasing: price cap
        sol = pricing.optimal_price(X([2.0, -0.5]))
        assert sol.x[0] == 50.0


def _single_group_params(beta=0.0, gamma=0.1):
    return pandemic.SirParams(
        contact_matrix=X([[beta]]),
        kappa=1.0,
        gamma=gamma,
        population=X([1000.0]),
        testing_capacity=0.0,
        horizon=10,
        initial_infected=X([100.0]),
    )


class TestSirStep:
    def test_disease_free_equilibrium(self):
        params = pandemic.default_params()
        state = pandemic.SirState(S=params.population.copy(), I=np.zeros(3), R=np.zeros(3))
        after = pandemic.sir_step(state, params, np.zeros(3))
        assert np.array_equal(after.S, state.S)
        assert np.array_equal(after.I, state.I)
        assert np.array_equal(after.R, state.R)

    def test_pure_decay_single_group(self):
        params = _single_group_params(beta=0.0, gamma=0.1)
        state = pandemic.initial_state(params)
        after = pandemic.sir_step(state, params, X([0.0]))
        assert abs(after.I[0] - 90.0) <= 1e-12
        assert abs(after.R[0] - 10.0) <= 1e-12

    def test_unstable_rate_raises(self):
        params = _single_group_params(gamma=0.6)
        state = pandemic.initial_state(params)
        with pytest.raises(UnstableStep):
            pandemic.sir_step(state, params, X([0.5]))

    def test_conservation_and_monotone_susceptibles(self):
        params = pandemic.default_params()
        rng = RngStream(12, 0).generator()
        for _ in range(5):
            theta = params.contact_matrix * rng.uniform(0.5, 1.5, size=(3, 3))
            rates = rng.uniform(0.0, 0.2, size=3)
            state = pandemic.initial_state(params)
            prev_s = state.S.sum()
            for _ in range(100):
                state = pandemic.sir_step(state, params, rates, contact_matrix=theta)
                total = state.S + state.I + state.R
                assert np.all(np.abs(total - params.population) <= 1e-9 * params.population)
                assert state.S.sum() <= prev_s + 1e-9
                assert np.all(state.S >= -1e-12) and np.all(state.I >= -1e-12)
                prev_s = state.S.sum()

    def test_step_matches_batch_core(self):
        params = pandemic.default_params()
        y = X([0.6, 0.8])
        rates = pandemic.decode_testing_rates(params, y)
        state = pandemic.initial_state(params)
        for _ in range(params.horizon):
            state = pandemic.sir_step(state, params, rates)
        step_total = float((params.population - state.S).sum())
        batch_total = pandemic.pandemic_objective(params, y)
        assert abs(step_total - batch_total) <= 1e-9 * max(1.0, batch_total)

    def test_testing_cannot_increase_cumulative_infections(self):
        params = pandemic.default_params()
        rng = RngStream(12, 1).generator()
        kappa = params.kappa
        for _ in range(20):
            theta = params.contact_matrix * rng.uniform(0.5, 1.5, size=(3, 3))
            base = rng.uniform(0.0, 0.25, size=3)
            f0 = pandemic._batch_cumulative(params, base[None, :], kappa * theta)[0]
            for k in range(3):
                bumped = base.copy()
                bumped[k] += 0.05
                fk = pandemic._batch_cumulative(params, bumped[None, :], kappa * theta)[0]
                assert fk <= f0 + 1e-9

    def test_no_testing_worse_than_concentrated_testing(self):
        params = pandemic.default_params()
        untested = pandemic._batch_cumulative(
            params, np.zeros((1, 3)), params.kappa * params.contact_matrix)[0]
        focused = pandemic.pandemic_objective(params, X([1.0, 0.0]))
        assert untested > focused


class TestPandemicObjective:
    def test_zero_capacity_equals_untested_trajectory(self):
        params = pandemic.default_params()
        zero_cap = pandemic.SirParams(
            contact_matrix=params.contact_matrix, kappa=params.kappa, gamma=params.gamma,
            population=params.population, testing_capacity=0.0, horizon=params.horizon,
            initial_infected=params.initial_infected,
        )
        got = pandemic.pandemic_objective(zero_cap, X([0.7, 0.3]))
        untested = pandemic._batch_cumulative(
            params, np.zeros((1, 3)), params.kappa * params.contact_matrix)[0]
        assert abs(got - untested) <= 1e-9

    def test_relabeling_symmetry(self):
        params = pandemic.default_params()
        perm = [1, 0, 2]
        theta_swapped = params.contact_matrix[np.ix_(perm, perm)]
        swapped = pandemic.SirParams(
            contact_matrix=theta_swapped, kappa=params.kappa, gamma=params.gamma,
            population=params.population[perm], testing_capacity=params.testing_capacity,
            horizon=params.horizon, initial_infected=params.initial_infected[perm],
        )
        # all capacity on group 1 in the original = all on group 2 after the swap
        f_orig = pandemic.pandemic_objective(params, X([1.0, 0.0]))
        f_swap = pandemic.pandemic_objective(swapped, X([0.0, 1.0]))
        assert abs(f_orig - f_swap) <= 1e-9 * max(1.0, f_orig)

    def test_curve_is_monotone_and_ends_at_objective(self):
        params = pandemic.default_params()
        y = X([0.5, 0.5])
        curve = pandemic.cumulative_infection_curve(params, y)
        assert curve.shape == (params.horizon + 1,)
        assert curve[0] == params.initial_infected.sum()
        assert np.all(np.diff(curve) >= -1e-9)
        assert abs(curve[-1] - pandemic.pandemic_objective(params, y)) <= 1e-9

    def test_bad_share_shape(self):
        with pytest.raises(InvalidParameter):
            pandemic.decode_testing_rates(pandemic.default_params(), X([0.5]))


class TestGroupSensitivity:
    def test_zero_contact_column_kills_group(self):
        params = pandemic.default_params()
        theta = params.contact_matrix.copy()
        theta[:, 2] = 0.0
        sol = pandemic.solve_testing_split(params, theta)
        rho = pandemic.pandemic_group_sensitivity(params, theta, sol.x)
        assert rho[2] == 0.0
        assert rho[0] > 0.0 and rho[1] > 0.0

    def test_identical_groups_have_equal_sensitivity(self):
        theta = X([[6.0, 6.0, 1.0], [6.0, 6.0, 1.0], [1.0, 1.0, 2.0]])
        params = pandemic.SirParams(
            contact_matrix=theta, kappa=1.0 / 105.0, gamma=0.1,
            population=X([1000.0, 1000.0, 1000.0]), testing_capacity=100.0,
            horizon=100, initial_infected=X([0.0, 0.0, 1.0]),
        )
        sol = pandemic.solve_testing_split(params)
        rho = pandemic.pandemic_group_sensitivity(params, theta, sol.x)
        assert abs(rho[0] - rho[1]) <= 1e-4 * max(rho[0], rho[1])

    def test_default_ordering_and_concentration(self):
        params = pandemic.default_params()
        sol = pandemic.solve_testing_split(params)
        rho = pandemic.pandemic_group_sensitivity(params, params.contact_matrix, sol.x)
        assert rho[0] > rho[1] > rho[2]
        from regret_design.design import kkt_group_allocation

        counts = kkt_group_allocation(rho, 10, RngStream(0, 13)).counts()
        assert counts[2] == 1
        assert counts[0] >= counts[1] > counts[2]


class TestSirParamsValidation:
    def test_requires_initial_infection(self):
        with pytest.raises(InvalidParameter):
            pandemic.SirParams(
                contact_matrix=np.eye(3), kappa=0.01, gamma=0.1,
                population=np.full(3, 100.0), testing_capacity=10.0,
                initial_infected=np.zeros(3),
            )

    def test_rejects_negative_contacts(self):
        with pytest.raises(InvalidParameter):
            pandemic.SirParams(
                contact_matrix=-np.eye(3), kappa=0.01, gamma=0.1,
                population=np.full(3, 100.0), testing_capacity=10.0,
                initial_infected=X([1.0, 0.0, 0.0]),
            )
