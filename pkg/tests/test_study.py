import json

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from epi_estimator.config import ORACLE_FALLBACK_SAMPLES
from epi_estimator.errors import ConfigError
from epi_estimator.estimate import calibration_set, impute_beta_tilde, mle_gamma
from epi_estimator.graph import run_study
from epi_estimator.ingest import inject_missingness
from epi_estimator.nodes import run_replicate, study_model, summarize
from epi_estimator.simulate import simulate_until
from epi_estimator.state import StudyConfig, load_study_config
from epi_estimator.streams import LAYOUT, MASK, ORACLE, SIMULATE, child_seed, stream


def tiny(tmp_path, **overrides):
    values = dict(
        betas=[2.0],
        p_missing=[0.0, 0.3],
        N=40,
        min_epidemic_size=8,
        replicates=3,
        interval="none",
        workers=1,
        seed=13,
        output_dir=str(tmp_path / "out"),
    )
    values.update(overrides)
    return StudyConfig(**values)


class TestConfig:
    def test_cells_order(self):
        cfg = StudyConfig(betas=[1.0, 2.0], p_missing=[0.1, 0.5])
        assert [(c["beta"], c["p_missing"]) for c in cfg.cells()] == [(1.0, 0.1), (1.0, 0.5), (2.0, 0.1), (2.0, 0.5)]
        assert [c["cell"] for c in cfg.cells()] == [0, 1, 2, 3]

    def test_r0_grid(self):
        cfg = StudyConfig(r0s=[1.5, 3.0], gamma=2.0)
        assert cfg.grid_betas == [3.0, 6.0]

    @pytest.mark.parametrize(
        "bad",
        [
            {"betas": []},
            {"betas": [-1.0]},
            {"p_missing": [1.2]},
            {"min_epidemic_size": 500},
            {"interval": "mcmc", "mcmc_iterations": 10, "mcmc_burn_in": 8},
            {"unknown_key": 1},
        ],
    )
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            load_study_config(None, bad)

    def test_toml_with_overrides(self, tmp_path):
        path = tmp_path / "study.toml"
        path.write_text('betas = [1.0, 3.0]\np_missing = [0.2]\nreplicates = 5\nestimator = "bar"\n')
        cfg = load_study_config(str(path), {"replicates": 7, "seed": None})
        assert cfg.betas == [1.0, 3.0]
        assert cfg.replicates == 7
        assert cfg.estimator == "bar"
        assert cfg.seed == StudyConfig().seed

    def test_unreadable_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("betas = [1.0,\n")
        with pytest.raises(ConfigError):
            load_study_config(str(path))


def test_replicate_row(tmp_path):
    cfg = tiny(tmp_path)
    row = run_replicate(({"cell": 1, "beta": 2.0, "p_missing": 0.3}, 0), cfg)
    assert row["status"] == "ok"
    assert row["n"] >= 8
    assert row["R0_hat"] == pytest.approx(row["beta_hat"] / row["gamma_hat"])
    assert row["lower"] is None and row["covered"] is None


def test_unreachable_size_is_recorded(tmp_path):
    cfg = tiny(tmp_path, betas=[0.1], min_epidemic_size=30, max_tries=5)
    row = run_replicate(({"cell": 0, "beta": 0.1, "p_missing": 0.0}, 0), cfg)
    assert row["status"] == "conditioning"
    assert row["beta_hat"] is None


def test_summary_counts():
    state = {
        "cells": [{"cell": 0, "beta": 2.0, "p_missing": 0.2}],
        "records": [
            {"cell": 0, "status": "ok", "n": 20, "beta_hat": 1.8, "covered": True, "width": 1.0, "midpoint": 2.1},
            {"cell": 0, "status": "ok", "n": 30, "beta_hat": 2.4, "covered": False, "width": 2.0, "midpoint": 2.5},
            {"cell": 0, "status": "calibration", "n": 25, "beta_hat": None, "covered": None, "width": None, "midpoint": None},
        ],
    }
    (row,) = summarize(state)["summary"]
    assert row["p_complete"] == pytest.approx(0.8)
    assert row["replicates"] == 3
    assert row["estimated"] == 2
    assert row["dropped_calibration"] == 1
    assert row["median_n"] == 25
    assert row["bias"] == pytest.approx(0.1)
    assert row["coverage"] == 0.5
    assert row["width"] == 1.5
    assert row["midpoint_bias"] == pytest.approx(0.3)


def test_study_writes_reports(tmp_path):
    cfg = tiny(tmp_path)
    final = run_study(cfg)
    assert len(final["records"]) == 6
    assert [r["cell"] for r in final["records"]] == [0, 0, 0, 1, 1, 1]
    assert len(final["summary"]) == 2
    names = sorted(p.split("/")[-1] for p in final["outputs"])
    assert names == ["replicates.csv", "study.json", "summary.csv"]
    payload = json.loads((tmp_path / "out" / "study.json").read_text())
    assert payload["kind"] == "study"
    assert payload["seed"] == 13
    assert "output_dir" not in payload["config"]


def test_study_is_reproducible(tmp_path):
    first = run_study(tiny(tmp_path, output_dir=str(tmp_path / "a")))
    second = run_study(tiny(tmp_path, output_dir=str(tmp_path / "b"), workers=2))
    assert first["records"] == second["records"]
    for name in ("replicates.csv", "summary.csv", "study.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_study_with_bootstrap(tmp_path):
    cfg = tiny(tmp_path, p_missing=[0.2], replicates=2, interval="bootstrap", b_out=4, b_in=3, se_reps=4, omega=0.3)
    final = run_study(cfg)
    for row in final["records"]:
        if row["status"] == "ok":
            assert row["lower"] <= row["midpoint"] <= row["upper"]
            assert row["width"] == pytest.approx(row["upper"] - row["lower"])


def test_study_with_mcmc(tmp_path):
    cfg = tiny(tmp_path, p_missing=[0.3], replicates=1, interval="mcmc", mcmc_iterations=60, mcmc_burn_in=10)
    (row,) = run_study(cfg)["records"]
    assert row["status"] == "ok"
    assert row["lower"] < row["upper"]


class TestErlangShape:
    def test_oracle_filled_for_shape_two(self):
        assert StudyConfig(m=2).oracle_samples == ORACLE_FALLBACK_SAMPLES
        assert StudyConfig(m=2, oracle_samples=5000).oracle_samples == 5000
        assert StudyConfig().oracle_samples is None

    def test_replicate_with_hard_pairs(self, tmp_path):
        cfg = tiny(tmp_path, m=2, p_missing=[0.4], replicates=1)
        row = run_replicate(({"cell": 0, "beta": 2.0, "p_missing": 0.4}, 0), cfg)
        assert row["status"] == "ok"
        assert row["n_missing"] > 0
        assert row["beta_hat"] > 0

    def test_oracle_draws_use_their_own_stream(self, tmp_path):
        cfg = tiny(tmp_path, m=2, p_missing=[0.4], replicates=1, oracle_samples=2000)
        row = run_replicate(({"cell": 0, "beta": 2.0, "p_missing": 0.4}, 0), cfg)
        model = study_model(cfg, 2.0, stream(cfg.seed, 0, 0, LAYOUT))
        log = simulate_until(
            model, lambda run: run.n >= 8, max_tries=cfg.max_tries, rng_seed=stream(cfg.seed, 0, 0, SIMULATE)
        )
        masked, _ = inject_missingness(log.cases, 0.4, cfg.p_inf_missing, stream(cfg.seed, 0, 0, MASK))
        gamma_hat = mle_gamma(calibration_set(masked), 2)
        oracle_seed = child_seed(stream(cfg.seed, 0, 0, ORACLE))
        expected = impute_beta_tilde(masked, cfg.N, 2, cfg.delta, gamma_hat, 2000, oracle_seed)
        assert row["beta_hat"] == expected


class TestStudyModels:
    def test_group_population(self, tmp_path):
        cfg = tiny(tmp_path, model="group", beta2=1.0)
        model = study_model(cfg, 2.0, stream(cfg.seed, 0, 0, LAYOUT))
        assert model.infection.rates == {"1": 2.0, "2": 1.0}
        assert model.population.group_sizes() == {"1": 20, "2": 20}

    def test_kernel_population(self, tmp_path):
        cfg = tiny(tmp_path, model="kernel", kernel_rate=0.1, mean_distance=0.9)
        model = study_model(cfg, 2.0, stream(cfg.seed, 0, 0, LAYOUT))
        locations = model.population.location_array()
        assert locations.shape == (40, 2)
        assert pdist(locations).mean() == pytest.approx(0.9)
        assert model.infection.kernel.rate == 0.1
        again = study_model(cfg, 2.0, stream(cfg.seed, 0, 0, LAYOUT))
        np.testing.assert_array_equal(again.population.location_array(), locations)

    def test_group_replicate_reports_both_rates(self, tmp_path):
        cfg = tiny(tmp_path, model="group", beta2=1.0)
        row = run_replicate(({"cell": 1, "beta": 2.0, "p_missing": 0.3}, 0), cfg)
        assert row["status"] == "ok"
        assert row["beta_hat"] >= 0 and row["beta2_hat"] >= 0
        assert row["R0_hat"] == pytest.approx(row["beta_hat"] / row["gamma_hat"])

    def test_kernel_study(self, tmp_path):
        final = run_study(tiny(tmp_path, model="kernel", estimator="bar"))
        assert all(row["beta2_hat"] is None for row in final["records"])
        assert any(row["status"] == "ok" for row in final["records"])

    def test_complete_data_benchmark_ignores_mask(self, tmp_path):
        cfg = tiny(tmp_path, model="group", estimator="mle")
        row = run_replicate(({"cell": 1, "beta": 2.0, "p_missing": 0.3}, 0), cfg)
        assert row["status"] == "ok"
        assert row["n_missing"] > 0

    @pytest.mark.parametrize("model", ["group", "kernel"])
    def test_point_estimates_only(self, model):
        with pytest.raises(ConfigError):
            load_study_config(None, {"model": model, "interval": "bootstrap"})
