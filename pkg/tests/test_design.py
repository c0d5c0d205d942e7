"""Bound terms, Bayesian design objective, and allocation optimizer tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regret_design.design import (
    DesignObjective,
    bayesian_design_objective,
    bound_terms,
    c_optimal_allocation,
    kkt_group_allocation,
    random_search,
    round_allocation,
    uniform_allocation,
)
from regret_design.errors import (
    BudgetTooSmall,
    DegenerateDirection,
    DimensionMismatch,
    InfeasibleFloor,
    NoFeasibleCandidate,
)
from regret_design.estimation import Allocation, DiagonalMeanModel, LogisticMleModel
from regret_design.numerics import RngStream
from regret_design.priors import IndependentNormalPrior, PointMassPrior
from regret_design.problems import pricing, quadratic

X = np.array
SQRT3 = np.sqrt(3.0)


def _oracle_conversion(x, theta):
    return 1.0 / (1.0 + np.exp(theta[0] + theta[1] * x))


class TestBoundTerms:
    def test_identity_at_n_one(self):
        got = bound_terms(np.eye(2), np.eye(2), 1)
        assert got.trace_term == 2.0
        assert got.frobenius_term == 0.0
        assert got.spectral_term == 0.0
        assert got.total == 2.0

    def test_scalar_direction(self):
        got = bound_terms(X([[1.0, -2.0]]), np.diag([1.0 / 50.0, 3.0 / 50.0]), 1)
        assert abs(got.trace_term - 0.26) <= 1e-15

    def test_log_factor_terms(self):
        # with covariance diag(4, 1) and log n = 1: trace 5, Tr(M^2) = 17,
        # spectral 4, so the tail terms are 2 sqrt(17) and 8
        got = bound_terms(np.eye(2), np.diag([4.0, 1.0]), np.e)
        assert abs(got.trace_term - 5.0) <= 1e-12
        assert abs(got.frobenius_term - 2.0 * np.sqrt(17.0)) <= 1e-12
        assert abs(got.spectral_term - 8.0) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            bound_terms(np.eye(2), np.eye(3), 10)

    def test_trace_dominates_spectral(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = rng.standard_normal((rng.integers(1, 4), 3))
            a = rng.standard_normal((3, 3))
            got = bound_terms(d, a @ a.T, np.e)
            assert got.trace_term >= got.spectral_term / 2.0 - 1e-12

    def test_rotation_invariance_of_trace(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            d = rng.standard_normal((2, 3))
            a = rng.standard_normal((3, 3))
            sigma = a @ a.T
            r, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            base = bound_terms(d, sigma, 1).trace_term
            rotated = bound_terms(d @ r.T, r @ sigma @ r.T, 1).trace_term
            assert abs(base - rotated) <= 1e-10 * max(1.0, abs(base))


class TestBayesianDesignObjective:
    def test_point_mass_quadratic_closed_form(self):
        problem = quadratic.make_problem()
        model = DiagonalMeanModel(X([1.0, SQRT3]))
        prior = PointMassPrior(X([10.0, 5.0]))
        obj = DesignObjective(problem, model, prior, 5, 100, RngStream(0, 0))
        for w in (0.3, 0.5, 0.776):
            alloc = Allocation.from_weights(X([w, 1.0 - w]), total=100)
            expect = 1.0 / (100 * w) + 4.0 * 3.0 / (100 * (1.0 - w))
            assert abs(bayesian_design_objective(obj, alloc) - expect) <= 1e-12

    def test_zero_covariance_model(self):
        problem = quadratic.make_problem()
        model = DiagonalMeanModel(X([0.0, 0.0]))
        prior = PointMassPrior(X([10.0, 5.0]))
        obj = DesignObjective(problem, model, prior, 3, 100, RngStream(0, 1))
        assert bayesian_design_objective(obj, Allocation.from_counts([40, 60])) == 0.0

    def test_pricing_uniform_matches_dense_script(self):
        problem = pricing.make_problem()
        model = LogisticMleModel(np.arange(10.0))
        theta = X([-4.0, 1.0])
        obj = DesignObjective(problem, model, PointMassPrior(theta), 1, 100, RngStream(0, 2))
        alloc = Allocation.from_counts([10] * 10, model.design_points)
        got = bayesian_design_objective(obj, alloc)

        # independent dense-matrix evaluation with explicit 100-row design
        x_star = obj.draws[0].x_star[0]
        d = pricing.pricing_d(x_star, theta)
        rows = np.repeat(np.arange(10.0), 10)
        z = np.column_stack([np.ones_like(rows), rows])
        w = _oracle_conversion(rows, theta) * (1.0 - _oracle_conversion(rows, theta))
        oracle = float(d @ np.linalg.inv(z.T @ (z * w[:, None])) @ d)
        assert abs(got - oracle) <= 1e-12 * max(1.0, abs(oracle))

    def test_budget_scaling_is_exact_for_diagonal(self):
        problem = quadratic.make_problem()
        model = DiagonalMeanModel(X([1.0, SQRT3]))
        prior = IndependentNormalPrior(X([10.0, 5.0]), X([1.0, 1.0]))
        obj = DesignObjective(problem, model, prior, 20, 100, RngStream(0, 3))
        base = bayesian_design_objective(obj, Allocation.from_counts([30, 70]))
        scaled = bayesian_design_objective(obj, Allocation.from_counts([120, 280]))
        assert scaled == base / 4.0

    def test_ranking_is_deterministic(self):
        problem = quadratic.make_problem()
        model = DiagonalMeanModel(X([1.0, SQRT3]))
        prior = IndependentNormalPrior(X([10.0, 5.0]), X([1.0, 1.0]))
        obj = DesignObjective(problem, model, prior, 30, 100, RngStream(0, 4))
        a = Allocation.from_counts([22, 78])
        b = Allocation.from_counts([50, 50])
        first = bayesian_design_objective(obj, a) - bayesian_design_objective(obj, b)
        second = bayesian_design_objective(obj, a) - bayesian_design_objective(obj, b)
        assert first == second
        assert first < 0.0


class TestCOptimalAllocation:
    def test_two_component_weights(self):
        got = c_optimal_allocation(X([1.0, -2.0]), X([1.0, SQRT3]))
        expect = X([1.0, 2.0 * SQRT3]) / (1.0 + 2.0 * SQRT3)
        assert np.allclose(got.weights, expect, atol=1e-15)
        # grid oracle: the closed form beats every interior grid point
        closed = 1.0 / got.weights[0] + 4.0 * 3.0 / got.weights[1]
        for w in np.linspace(0.001, 0.999, 999):
            assert closed <= 1.0 / w + 12.0 / (1.0 - w) + 1e-9

    def test_useless_component_gets_zero(self):
        got = c_optimal_allocation(X([1.0, 0.0]), X([1.0, 1.0]))
        assert np.allclose(got.weights, [1.0, 0.0])

    def test_symmetry(self):
        got = c_optimal_allocation(X([1.0, 1.0]), X([1.0, 1.0]))
        assert np.allclose(got.weights, [0.5, 0.5])

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateDirection):
            c_optimal_allocation(X([0.0, 0.0]), X([1.0, 1.0]))

    def test_beats_dirichlet_samples(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            d = rng.standard_normal(k) * rng.uniform(0.5, 3.0)
            d[rng.integers(k)] += 1.0  # keep at least one nonzero
            sigma = rng.uniform(0.2, 3.0, size=k)
            got = c_optimal_allocation(d, sigma)
            mass = d**2 * sigma**2

            def value(w):
                with np.errstate(divide="ignore"):
                    return float(np.sum(np.where(mass > 0, mass / w, 0.0)))

            closed = value(got.weights)
            samples = rng.dirichlet(np.ones(k), size=2000)
            assert closed <= np.min([value(w) for w in samples]) + 1e-9


class TestKktGroupAllocation:
    def test_symmetric_split(self):
        got = kkt_group_allocation(X([1.0, 1.0, 1.0]), 9, RngStream(0, 5))
        assert np.array_equal(got.counts(), [3, 3, 3])

    def test_last_group_floor_fixup(self):
        seen = set()
        for seed in range(40):
            got = kkt_group_allocation(X([10.0, 10.0, 1e-4]), 10, RngStream(seed, 6))
            seen.add(tuple(got.counts()))
        assert seen <= {(5, 4, 1), (4, 5, 1)}
        assert len(seen) == 2  # the coin actually flips both ways

    def test_unequal_sensitivities_break_ties_deterministically(self):
        # fractional (5.4, 4.5, 0.09) rounds to (5, 5, 0); giving the trace
        # back from group 2 raises the criterion least, so no coin is needed
        rho = X([5.404, 4.503, 0.093])
        outcomes = {
            tuple(kkt_group_allocation(rho, 10, RngStream(seed, 6)).counts())
            for seed in range(20)
        }
        assert outcomes == {(5, 4, 1)}

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            kkt_group_allocation(X([1.0, 1.0, 1.0]), 2, RngStream(0, 7))

    def test_degenerate(self):
        with pytest.raises(DegenerateDirection):
            kkt_group_allocation(X([0.0, 0.0, 0.0]), 10, RngStream(0, 8))

    @settings(max_examples=300, deadline=None)
    @given(
        rho=st.lists(st.floats(0.0, 1e3), min_size=3, max_size=3),
        total=st.integers(3, 500),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_counts_sum_and_floor(self, rho, total, seed):
        rho = np.asarray(rho)
        if rho.sum() <= 0.0:
            rho[0] = 1.0
        got = kkt_group_allocation(rho, total, RngStream(seed, 9))
        counts = got.counts()
        assert counts.sum() == total
        assert np.all(counts >= 1)


class TestRoundAllocation:
    def test_largest_remainder(self):
        frac = Allocation.from_weights(X([0.224, 0.776]))
        got = round_allocation(frac, 100)
        assert np.array_equal(got.counts(), [22, 78])

    def test_exact_thirds(self):
        frac = Allocation.from_weights(np.full(3, 1.0 / 3.0))
        got = round_allocation(frac, 9, min_per_point=1)
        assert np.array_equal(got.counts(), [3, 3, 3])

    def test_floor_enforcement_takes_from_largest(self):
        frac = Allocation.from_weights(X([0.998, 0.001, 0.001]))
        got = round_allocation(frac, 10, min_per_point=1)
        assert np.array_equal(got.counts(), [8, 1, 1])

    def test_infeasible_floor(self):
        frac = Allocation.from_weights(np.full(4, 0.25))
        with pytest.raises(InfeasibleFloor):
            round_allocation(frac, 3, min_per_point=1)

    @settings(max_examples=300, deadline=None)
    @given(
        raw=st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=8),
        total=st.integers(1, 1000),
    )
    def test_sum_is_exact(self, raw, total):
        w = np.asarray(raw) / np.sum(raw)
        w = w / w.sum()
        got = round_allocation(Allocation.from_weights(w), total)
        assert got.counts().sum() == total
        assert np.all(got.counts() >= 0)


class TestRandomSearch:
    def _objective(self, prior_draws=25):
        problem = quadratic.make_problem()
        model = DiagonalMeanModel(X([1.0, SQRT3]))
        prior = IndependentNormalPrior(X([10.0, 5.0]), X([1.0, 1.0]))
        return DesignObjective(problem, model, prior, prior_draws, 100, RngStream(0, 10))

    def test_single_candidate_returned(self):
        obj = self._objective(5)
        got = random_search(obj, 1, RngStream(3, 0))
        assert got.counts().sum() == 100

    def test_matches_closed_form_within_two_percent(self):
        obj = self._objective(40)
        got = random_search(obj, 10_000, RngStream(3, 1))
        d_eff = np.sqrt(obj.mean_squared_sensitivity())
        closed = round_allocation(c_optimal_allocation(d_eff, X([1.0, SQRT3])), 100,
                                  min_per_point=1)
        got_val = bayesian_design_objective(obj, got)
        closed_val = bayesian_design_objective(obj, closed)
        assert got_val <= 1.02 * closed_val

    def test_bit_reproducible_on_pricing(self):
        problem = pricing.make_problem()
        model = LogisticMleModel(np.arange(10.0))
        obj = DesignObjective(problem, model, PointMassPrior(X([-4.0, 1.0])), 5, 100,
                              RngStream(0, 13))
        a = random_search(obj, 1000, RngStream(42, 2))
        b = random_search(obj, 1000, RngStream(42, 2))
        assert np.array_equal(a.counts(), b.counts())

    def test_vectorized_scores_match_public_objective(self):
        from regret_design.design import _candidate_scores, _sample_compositions

        rng = RngStream(9, 0).generator()
        problem_p = pricing.make_problem()
        model_p = LogisticMleModel(np.arange(10.0))
        prior_p = IndependentNormalPrior(X([-4.0, 1.0]), X([0.1, 0.1]))
        obj_p = DesignObjective(problem_p, model_p, prior_p, 10, 100, RngStream(1, 0))
        counts = _sample_compositions(rng, 100, 10, 30)
        scores = _candidate_scores(obj_p, counts)
        for row in range(counts.shape[0]):
            alloc = Allocation.from_counts(counts[row], model_p.design_points)
            if np.isfinite(scores[row]):
                direct = bayesian_design_objective(obj_p, alloc)
                assert abs(scores[row] - direct) <= 1e-9 * max(1.0, abs(direct))

    def test_all_singular_raises(self):
        problem = pricing.make_problem()
        model = LogisticMleModel(X([0.0, 1.0]))
        prior = PointMassPrior(X([-4.0, 1.0]))
        obj = DesignObjective(problem, model, prior, 2, 1, RngStream(0, 11))
        # budget 1 over two prices can never hit both prices: always singular
        with pytest.raises(NoFeasibleCandidate):
            random_search(obj, 50, RngStream(0, 12))

    def test_compositions_are_uniform_enough(self):
        from regret_design.design import _sample_compositions

        rng = RngStream(6, 0).generator()
        counts = _sample_compositions(rng, 4, 2, 20_000)
        # compositions of 4 into 2 parts: 5 equally likely outcomes
        freq = np.bincount(counts[:, 0], minlength=5) / 20_000
        assert np.all(np.abs(freq - 0.2) < 0.02)


class TestUniformAllocation:
    def test_even_split_with_remainder(self):
        got = uniform_allocation((0, 1, 2), 10, min_per_point=1)
        assert np.array_equal(got.counts(), [4, 3, 3])

    def test_exact_split(self):
        got = uniform_allocation(tuple(range(10)), 100)
        assert np.array_equal(got.counts(), [10] * 10)
