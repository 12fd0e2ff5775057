import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import case
from epi_estimator.core import (
    CaseArrays,
    CaseRecord,
    GroupInfection,
    HomogeneousRemoval,
    KernelSpec,
    ObservationPattern,
    Population,
    RateModel,
    check_incubation,
    complete_loglik,
    index_case,
    pairwise_tau,
    sufficient_stats,
    tau_matrix,
)
from epi_estimator.errors import DataError, IncompletePairError


class TestCaseRecord:
    def test_needs_an_endpoint(self):
        with pytest.raises(ValidationError):
            CaseRecord(id=1)

    def test_removal_must_follow_infection(self):
        with pytest.raises(ValidationError):
            CaseRecord(id=1, infection_time=2.0, removal_time=2.0)

    def test_rejects_non_finite_times(self):
        with pytest.raises(ValidationError):
            CaseRecord(id=1, infection_time=float("inf"))

    def test_exposure_not_after_infection(self):
        with pytest.raises(ValidationError):
            CaseRecord(id=1, exposure_time=3.0, infection_time=2.0, removal_time=4.0)

    def test_partial_records(self):
        assert not case(1, i=2.0).is_complete
        assert case(1, i=2.0, r=5.0).duration == 3.0
        assert case(1, r=5.0).duration is None


class TestPairwiseTau:
    def test_partial_overlap(self):
        assert pairwise_tau(case(0, 0.0, 3.0), case(1, 1.0, 2.0)) == 1.0

    def test_infector_removed_before_exposure(self):
        assert pairwise_tau(case(0, 0.0, 3.0), case(1, 5.0, 6.0)) == 3.0

    def test_susceptible_exposed_first(self):
        assert pairwise_tau(case(0, 0.0, 3.0), case(1, -1.0, 2.0)) == 0.0

    def test_incubation_moves_exposure(self):
        assert pairwise_tau(case(0, 0.0, 3.0), case(1, 2.0, 4.0), delta=1.5) == 0.5

    @pytest.mark.parametrize(
        "k, j, missing",
        [
            (case(0, r=3.0), case(1, 1.0, 2.0), "i_k"),
            (case(0, i=0.0), case(1, 1.0, 2.0), "r_k"),
            (case(0, 0.0, 3.0), case(1, r=2.0), "i_j"),
        ],
    )
    def test_incomplete_pair(self, k, j, missing):
        with pytest.raises(IncompletePairError) as err:
            pairwise_tau(k, j)
        assert err.value.details["missing"] == missing

    def test_matrix_matches_pairwise(self, chain_outbreak):
        arrays = CaseArrays.from_records(chain_outbreak)
        tau = tau_matrix(arrays.infection, arrays.removal, arrays.infection)
        for a, k in enumerate(chain_outbreak):
            for b, j in enumerate(chain_outbreak):
                expected = 0.0 if a == b else pairwise_tau(k, j)
                assert tau[a, b] == pytest.approx(expected)


class TestIndexCase:
    def test_earliest_infection(self):
        ids = np.array([4, 2, 9])
        assert index_case(ids, np.array([1.0, 0.5, 2.0]), np.array([3.0, 3.0, 3.0])) == 1

    def test_ties_go_to_smallest_id(self):
        ids = np.array([4, 2, 9])
        assert index_case(ids, np.array([0.5, 0.5, 0.5]), np.array([3.0, 3.0, 3.0])) == 1

    def test_missing_infections_are_skipped(self):
        ids = np.array([0, 1])
        assert index_case(ids, np.array([np.nan, 2.0]), np.array([1.0, 4.0])) == 1

    def test_removal_only_data_uses_removals(self):
        ids = np.array([0, 1, 2])
        nan = np.full(3, np.nan)
        assert index_case(ids, nan, np.array([5.0, 2.0, 3.0])) == 1


class TestSufficientStats:
    def test_values(self, chain_outbreak):
        stats = sufficient_stats(chain_outbreak, N=10)
        assert stats.A == pytest.approx(13.5)
        assert stats.B == pytest.approx(20.5 + 5 * 13.5)
        assert stats.log_C == pytest.approx(math.log(8))
        assert stats.C == pytest.approx(8.0)
        assert stats.n == 5
        assert stats.tau.sum() == pytest.approx(20.5)

    def test_no_live_infector_gives_zero_c(self):
        data = [case(0, 0.0, 1.0), case(1, 2.0, 3.0)]
        assert sufficient_stats(data, N=5).C == 0.0

    def test_requires_complete_cases(self):
        with pytest.raises(DataError):
            sufficient_stats([case(0, 0.0, 1.0), case(1, r=3.0)], N=5)

    def test_population_below_epidemic_size(self, chain_outbreak):
        with pytest.raises(DataError):
            sufficient_stats(chain_outbreak, N=3)


def termwise_loglik(data, beta, gamma, N, m=1, delta=0.0):
    """Product form of the complete-data likelihood, one factor at a time."""
    rate = beta / N
    total = 0.0
    for c in data:
        d = c.removal_time - c.infection_time
        total += m * math.log(gamma) + (m - 1) * math.log(d) - gamma * d - math.lgamma(m)
    for k in data:
        for j in data:
            if k.id != j.id:
                e = j.infection_time - delta
                total -= rate * (min(k.removal_time, e) - min(e, k.infection_time))
    total -= rate * (N - len(data)) * sum(c.removal_time - c.infection_time for c in data)
    first = min(data, key=lambda c: (c.infection_time, c.id))
    for j in data:
        if j.id == first.id:
            continue
        e = j.infection_time - delta
        live = sum(1 for k in data if k.id != j.id and k.infection_time < e < k.removal_time)
        total += math.log(rate * live)
    return total


class TestLogLikelihood:
    def test_finite_for_valid_outbreak(self, chain_outbreak):
        model = RateModel.homogeneous(1.0, 0.5, 10)
        assert math.isfinite(complete_loglik(chain_outbreak, model))

    @pytest.mark.parametrize("m, delta", [(1, 0.0), (2, 0.0), (3, 0.3)])
    def test_matches_termwise_product(self, chain_outbreak, m, delta):
        model = RateModel.homogeneous(1.7, 0.9, 10, erlang_shape=m, incubation=delta)
        expected = termwise_loglik(chain_outbreak, 1.7, 0.9, 10, m, delta)
        assert complete_loglik(chain_outbreak, model) == pytest.approx(expected, abs=1e-10)

    def test_matches_termwise_product_on_simulated_outbreak(self, simulated_outbreak):
        model = RateModel.homogeneous(2.0, 1.0, 60)
        expected = termwise_loglik(simulated_outbreak, 2.0, 1.0, 60)
        assert complete_loglik(simulated_outbreak, model) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("outbreak, N", [("chain_outbreak", 10), ("simulated_outbreak", 60)])
    def test_doubling_beta(self, request, outbreak, N):
        data = request.getfixturevalue(outbreak)
        beta = 0.7
        base = complete_loglik(data, RateModel.homogeneous(beta, 0.5, N))
        doubled = complete_loglik(data, RateModel.homogeneous(2 * beta, 0.5, N))
        stats = sufficient_stats(data, N)
        expected = (stats.n - 1) * math.log(2) - beta * stats.B / N
        assert doubled - base == pytest.approx(expected, abs=1e-10)

    def test_peaks_near_the_closed_form_estimate(self, chain_outbreak):
        N = 10
        beta_hat = 4 * N / (20.5 + 5 * 13.5)
        at_hat = complete_loglik(chain_outbreak, RateModel.homogeneous(beta_hat, 5 / 13.5, N))
        for scale in (0.8, 1.25):
            other = complete_loglik(chain_outbreak, RateModel.homogeneous(beta_hat * scale, 5 / 13.5, N))
            assert other < at_hat

    def test_impossible_outbreak(self):
        data = [case(0, 0.0, 1.0), case(1, 2.0, 3.0)]
        assert complete_loglik(data, RateModel.homogeneous(1.0, 1.0, 5)) == -math.inf


class TestPatterns:
    def test_classify(self):
        k, j = case(0, i=0.0), case(1, r=2.0)
        assert ObservationPattern.classify(k, j) is ObservationPattern.R_J_I_K
        assert ObservationPattern.classify(j, k) is ObservationPattern.R_K_I_J

    def test_redundant_removal_is_aliased(self):
        k, j = case(0, r=3.0), case(1, 1.0, 2.0)
        assert ObservationPattern.classify(k, j) is ObservationPattern.R_K_R_J_I_J
        assert ObservationPattern.classify(k, j).canonical is ObservationPattern.R_K_I_J

    def test_complete(self):
        assert ObservationPattern.classify(case(0, 0.0, 1.0), case(1, i=0.5)) is ObservationPattern.COMPLETE


class TestModels:
    def test_group_rates_need_population_groups(self):
        with pytest.raises(ValidationError):
            RateModel(
                infection=GroupInfection(rates={"a": 1.0}),
                removal=HomogeneousRemoval(gamma=1.0),
                population_size=4,
            )

    def test_group_sizes(self):
        pop = Population(size=4, infection_groups=("a", "b", "a", "a"))
        assert pop.group_sizes() == {"a": 3, "b": 1}

    def test_population_lengths_checked(self):
        with pytest.raises(ValidationError):
            Population(size=3, infection_groups=("a", "b"))

    def test_exponential_kernel(self):
        kernel = KernelSpec(kind="exponential_decay", rate=2.0)
        h = kernel.matrix(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0], [0.0, 0.0]]))
        assert h[0] == pytest.approx([math.exp(-10.0), 1.0])

    def test_check_incubation(self):
        data = [CaseRecord(id=0, exposure_time=1.0, infection_time=3.0, removal_time=4.0)]
        check_incubation(data, 2.0)
        with pytest.raises(DataError):
            check_incubation(data, 1.0)
