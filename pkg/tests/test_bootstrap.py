import numpy as np
import pytest
from pydantic import ValidationError

from epi_estimator.bootstrap import (
    BootstrapConfig,
    IntervalResult,
    bootstrap_t,
    bootstrap_t_interval,
    covers,
    empirical_quantile,
    resolve_missingness,
    width,
)
from epi_estimator.errors import EstimationError
from epi_estimator.estimate import calibration_set, impute_beta_tilde, mle_gamma
from epi_estimator.graph import run_study
from epi_estimator.ingest import inject_missingness
from epi_estimator.state import StudyConfig


def test_empirical_quantile():
    samples = [4.0, 1.0, 3.0, 2.0, 5.0]
    assert empirical_quantile(samples, 0.0) == 1.0
    assert empirical_quantile(samples, 0.5) == 3.0
    assert empirical_quantile(samples, 1.0) == 5.0
    assert empirical_quantile(samples, 0.125) == pytest.approx(1.5)


def test_empirical_quantile_errors():
    with pytest.raises(EstimationError):
        empirical_quantile([], 0.5)
    with pytest.raises(EstimationError):
        empirical_quantile([1.0], 1.5)


def test_interval_from_symmetric_t():
    t = np.linspace(-2.0, 2.0, 401)
    lower, upper, midpoint, t_lower, t_upper = bootstrap_t_interval(3.0, 0.5, t, 0.05)
    assert t_lower == pytest.approx(-1.9, abs=1e-9)
    assert t_upper == pytest.approx(1.9, abs=1e-9)
    assert lower == pytest.approx(3.0 - 1.9 * 0.5)
    assert upper == pytest.approx(3.0 + 1.9 * 0.5)
    assert midpoint == pytest.approx(3.0)


def test_interval_flips_skewed_t():
    # t* mostly positive: estimates overshoot, so the interval sits below θ
    t = np.linspace(0.0, 4.0, 101)
    lower, upper, midpoint, _, _ = bootstrap_t_interval(2.0, 0.1, t, 0.1)
    assert upper < 2.0
    assert midpoint < 2.0
    assert lower < upper


def test_covers_and_width():
    interval = IntervalResult(
        parameter="beta",
        estimate=2.0,
        lower=1.5,
        upper=2.7,
        midpoint=2.1,
        se=0.3,
        t_lower=-2.0,
        t_upper=1.7,
        alpha=0.05,
        replicates=10,
    )
    assert covers(interval, 1.5)
    assert covers(interval, 2.7)
    assert not covers(interval, 2.71)
    assert width(interval) == pytest.approx(1.2)


def test_interval_endpoints_must_be_ordered():
    with pytest.raises(ValueError):
        IntervalResult(
            parameter="R0",
            estimate=2.0,
            lower=2.5,
            upper=2.0,
            midpoint=2.25,
            se=0.1,
            t_lower=-1.0,
            t_upper=1.0,
            alpha=0.05,
            replicates=3,
        )


@pytest.fixture
def masked_outbreak(simulated_outbreak):
    masked, _ = inject_missingness(simulated_outbreak, 0.2, 0.5, 11)
    gamma_hat = mle_gamma(calibration_set(masked))
    beta_hat = impute_beta_tilde(masked, 60, 1, 0.0, gamma_hat)
    return masked, beta_hat, gamma_hat


def small_config(**overrides):
    values = dict(b_out=8, b_in=4, se_reps=6, omega=0.3, p_missing=0.2, seed=5, max_tries=300)
    values.update(overrides)
    return BootstrapConfig(**values)


def test_bootstrap_small_run(masked_outbreak):
    masked, beta_hat, gamma_hat = masked_outbreak
    result = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config(percentile=True))
    assert result.n == len(masked)
    assert result.gamma == gamma_hat
    assert len(result.replicates) == 8
    assert result.beta.lower <= result.beta.midpoint <= result.beta.upper
    assert result.beta.se > 0 and result.R0.se > 0
    assert result.beta.estimate == beta_hat
    assert result.R0.estimate == pytest.approx(beta_hat / gamma_hat)
    assert result.beta.percentile is not None and result.beta.basic is not None
    survivors = [o for o in result.replicates if o.status == "ok"]
    assert result.beta.replicates == len(survivors) >= 2
    for outcome in survivors:
        assert outcome.n_star == pytest.approx(len(masked), rel=0.3)


def test_bootstrap_is_reproducible(masked_outbreak):
    masked, beta_hat, gamma_hat = masked_outbreak
    first = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config())
    again = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config())
    assert first == again
    other = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config(seed=6))
    assert other.beta.lower != first.beta.lower


def test_bootstrap_ignores_worker_count(masked_outbreak):
    masked, beta_hat, gamma_hat = masked_outbreak
    serial = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config())
    pooled = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config(workers=2))
    assert serial == pooled


def test_bootstrap_mirror_mode(masked_outbreak):
    masked, beta_hat, gamma_hat = masked_outbreak
    result = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config(missingness_mode="mirror"))
    assert result.beta.lower < result.beta.upper


def test_bootstrap_needs_positive_estimates(masked_outbreak):
    masked, _, gamma_hat = masked_outbreak
    with pytest.raises(EstimationError):
        bootstrap_t(masked, 0.0, gamma_hat, 60, small_config())


@pytest.mark.slow
def test_midpoint_reduces_downward_bias(tmp_path):
    cfg = StudyConfig(
        betas=[5.0],
        p_missing=[0.6],
        replicates=200,
        b_out=100,
        b_in=10,
        se_reps=50,
        seed=21,
        workers=4,
        output_dir=str(tmp_path),
    )
    summary = run_study(cfg)["summary"][0]
    assert summary["median_beta_hat"] < 5.0
    assert abs(summary["midpoint_bias"]) < abs(summary["bias"])


@pytest.mark.slow
def test_coverage_near_nominal(tmp_path):
    cfg = StudyConfig(
        betas=[2.0],
        delta=1.0,
        p_missing=[0.2],
        N=100,
        replicates=200,
        b_out=200,
        b_in=20,
        se_reps=100,
        seed=2024,
        workers=8,
        output_dir=str(tmp_path),
    )
    summary = run_study(cfg)["summary"][0]
    assert summary["intervals"] >= 180
    assert summary["coverage"] == pytest.approx(0.91, abs=0.06)
    assert summary["width"] == pytest.approx(0.91, abs=0.25)


def test_missingness_read_off_the_data(simulated_outbreak):
    masked, report = inject_missingness(simulated_outbreak, 0.4, 0.5, 12)
    resolved = resolve_missingness(BootstrapConfig(), masked)
    assert resolved.p_missing == pytest.approx(report.n_missing / len(masked))
    assert resolved.p_inf_missing == pytest.approx(len(report.missing_infection) / report.n_missing)
    kept = resolve_missingness(BootstrapConfig(p_missing=0.1, p_inf_missing=0.9), masked)
    assert (kept.p_missing, kept.p_inf_missing) == (0.1, 0.9)


def test_complete_data_resolves_to_no_masking(simulated_outbreak):
    resolved = resolve_missingness(BootstrapConfig(), simulated_outbreak)
    assert resolved.p_missing == 0.0
    assert resolved.p_inf_missing == 0.5


def test_default_config_masks_replicates(masked_outbreak):
    masked, beta_hat, gamma_hat = masked_outbreak
    observed = resolve_missingness(BootstrapConfig(), masked)
    assert observed.p_missing > 0
    implicit = bootstrap_t(masked, beta_hat, gamma_hat, 60, small_config(p_missing=None))
    explicit = bootstrap_t(
        masked,
        beta_hat,
        gamma_hat,
        60,
        small_config(p_missing=observed.p_missing, p_inf_missing=observed.p_inf_missing),
    )
    assert implicit == explicit


def test_mle_needs_complete_replicates():
    with pytest.raises(ValidationError):
        BootstrapConfig(estimator="mle", p_missing=0.2)
    assert BootstrapConfig(estimator="mle", p_missing=0.0).p_missing == 0.0
