import numpy as np
import pandas as pd
import pytest

from conftest import case
from epi_estimator.core import RateModel
from epi_estimator.errors import DataError
from epi_estimator.estimate import mle_beta, mle_gamma
from epi_estimator.ingest import (
    apply_offsets,
    dequantize,
    dequantize_frame,
    inject_missingness,
    observed_pattern,
)
from epi_estimator.simulate import simulate_until


class TestInjectMissingness:
    def test_nothing_missing(self, simulated_outbreak):
        masked, report = inject_missingness(simulated_outbreak, 0.0, 0.5, 1)
        assert masked == simulated_outbreak
        assert report.n_missing == 0
        assert report.n_complete == len(simulated_outbreak)

    def test_everything_loses_infection(self, simulated_outbreak):
        masked, report = inject_missingness(simulated_outbreak, 1.0, 1.0, 1)
        assert all(c.infection_time is None and c.removal_time is not None for c in masked)
        assert report.missing_infection == sorted(c.id for c in simulated_outbreak)
        assert report.missing_removal == []

    def test_never_drops_both_endpoints(self, simulated_outbreak):
        masked, report = inject_missingness(simulated_outbreak, 1.0, 0.5, 2)
        assert all((c.infection_time is None) != (c.removal_time is None) for c in masked)
        assert report.n_missing == len(simulated_outbreak)

    def test_masked_infection_drops_exposure(self):
        data = [case(0, 1.0, 2.0, exposure_time=0.5), case(1, 1.5, 3.0, exposure_time=1.0)]
        masked, _ = inject_missingness(data, 1.0, 1.0, 0)
        assert all(c.exposure_time is None for c in masked)

    def test_reproducible(self, simulated_outbreak):
        first = inject_missingness(simulated_outbreak, 0.3, 0.5, 42)
        again = inject_missingness(simulated_outbreak, 0.3, 0.5, 42)
        assert first == again

    def test_mirror_counts(self, simulated_outbreak):
        masked, report = inject_missingness(simulated_outbreak, 0.0, 0.0, 3, mode="mirror", counts=(2, 3))
        assert len(report.missing_infection) == 2
        assert len(report.missing_removal) == 3
        pattern = observed_pattern(masked)
        assert sorted(pattern.missing_infection) == report.missing_infection
        assert sorted(pattern.missing_removal) == report.missing_removal

    def test_mirror_counts_capped_by_size(self):
        data = [case(0, 0.0, 1.0), case(1, 0.5, 2.0)]
        _, report = inject_missingness(data, 0.0, 0.0, 3, mode="mirror", counts=(1, 4))
        assert report.n_missing == 2
        assert len(report.missing_infection) == 1

    def test_mirror_needs_counts(self, chain_outbreak):
        with pytest.raises(DataError):
            inject_missingness(chain_outbreak, 0.1, 0.5, 0, mode="mirror")

    def test_rejects_partial_input(self):
        with pytest.raises(DataError):
            inject_missingness([case(0, 0.0, 1.0), case(1, r=2.0)], 0.5, 0.5, 0)

    def test_rejects_bad_probability(self, chain_outbreak):
        with pytest.raises(DataError):
            inject_missingness(chain_outbreak, 1.5, 0.5, 0)


class TestDequantize:
    def test_zero_noise_is_identity(self):
        i = np.array([0.0, 1.0, np.nan])
        r = np.array([3.0, np.nan, 5.0])
        noisy_i, noisy_r = dequantize(i, r, 0.0, 1)
        np.testing.assert_array_equal(noisy_i, i)
        np.testing.assert_array_equal(noisy_r, r)

    def test_daily_data_keeps_order(self):
        i = np.repeat(np.arange(50.0), 2)
        r = i + 1.0
        noisy_i, noisy_r = dequantize(i, r, 0.33, 7)
        assert np.all(noisy_r > noisy_i)
        assert not np.array_equal(noisy_i, i)
        again = dequantize(i, r, 0.33, 7)
        np.testing.assert_array_equal(again[0], noisy_i)

    def test_missing_stays_missing(self):
        noisy_i, noisy_r = dequantize(np.array([np.nan, 1.0]), np.array([2.0, np.nan]), 0.5, 0)
        assert np.isnan(noisy_i[0]) and np.isnan(noisy_r[1])

    def test_degenerate_case(self):
        with pytest.raises(DataError) as info:
            dequantize(np.array([0.0, 2.0]), np.array([1.0, 2.0]), 0.1, 0, ids=[10, 11])
        assert info.value.details["case_ids"] == [11]

    def test_negative_sigma(self):
        with pytest.raises(DataError):
            dequantize(np.array([0.0]), np.array([1.0]), -0.1, 0)

    def test_frame_with_incubation(self):
        frame = pd.DataFrame(
            {
                "case_id": [0, 1],
                "exposure_time": [np.nan, np.nan],
                "infection_time": [10.0, 12.0],
                "removal_time": [14.0, 15.0],
            }
        )
        result = dequantize_frame(frame, 0.33, 3, delta=10.0)
        np.testing.assert_allclose(result["exposure_time"], result["infection_time"] - 10.0)
        assert frame["infection_time"].tolist() == [10.0, 12.0]

    def test_daily_rounding_keeps_reproduction_number(self):
        model = RateModel.homogeneous(0.4, 0.2, 100)
        truth, rounded, noisy = [], [], []
        for s in range(40):
            log = simulate_until(model, lambda run: run.n >= 20, max_tries=1000, rng_seed=np.random.default_rng(s))
            i = np.array([c.infection_time for c in log.cases])
            r = np.array([c.removal_time for c in log.cases])
            day_i = np.round(i)
            # a case seen on a single day is recorded as removed the next day
            day_r = np.maximum(np.round(r), day_i + 1.0)
            deq_i, deq_r = dequantize(day_i, day_r, 0.33, s)
            for sink, (a, b) in ((truth, (i, r)), (rounded, (day_i, day_r)), (noisy, (deq_i, deq_r))):
                cases = [case(k, float(x), float(y)) for k, (x, y) in enumerate(zip(a, b))]
                sink.append(mle_beta(cases, 100) / mle_gamma(cases))
        truth, rounded, noisy = map(np.asarray, (truth, rounded, noisy))
        assert abs(np.mean(noisy - rounded)) < 0.02 * np.mean(rounded)
        assert abs(np.mean(noisy - truth)) < 0.05 * np.mean(truth)


def test_offsets():
    frame = pd.DataFrame(
        {"case_id": [0], "exposure_time": [np.nan], "infection_time": [5.0], "removal_time": [8.0]}
    )
    shifted = apply_offsets(frame, infection_offset=-1.0, removal_offset=3.0)
    assert shifted["infection_time"].iloc[0] == 4.0
    assert shifted["removal_time"].iloc[0] == 11.0
    assert frame["infection_time"].iloc[0] == 5.0
