import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_t
from .core import (
    CaseRecord,
    GroupInfection,
    HomogeneousRemoval,
    KernelInfection,
    KernelSpec,
    Population,
    RateModel,
)
from .errors import ConditioningFailed, EstimationError, NoClosedFormError
from .estimate import (
    calibration_set,
    group_sizes_from,
    impute_beta_bar,
    impute_beta_bar_group,
    impute_beta_bar_kernel,
    impute_beta_tilde,
    impute_beta_tilde_group,
    impute_beta_tilde_kernel,
    mle_beta,
    mle_beta_group,
    mle_beta_kernel,
    mle_gamma,
)
from .ingest import inject_missingness
from .logger import logger
from .mcmc import PriorSpec, run_damcmc
from .rates import population_locations
from .simulate import simulate_until
from .state import StudyConfig, StudyState
from .streams import LAYOUT, MASK, MCMC, ORACLE, OUTER, SIMULATE, child_seed, stream
from .utils import dumps, envelope, save_report, tidy_csv

FIRST_GROUP, SECOND_GROUP = "1", "2"


def plan_cells(state: StudyState) -> StudyState:
    """
    Node 1: Expands the configured grid into cells.
    """
    cfg = state["config"]
    cells = cfg.cells()
    logger.info(
        f"[bold cyan]Planning study:[/] {len(cells)} cells × {cfg.replicates} replicates, "
        f"model={cfg.model}, interval={cfg.interval}",
        extra={"markup": True},
    )
    return {"cells": cells}


def study_model(cfg: StudyConfig, beta: float, layout_rng: np.random.Generator) -> RateModel:
    """Rate model of one replicate; kernel locations are drawn from ``layout_rng``."""
    if cfg.model == "homogeneous":
        return RateModel.homogeneous(beta, cfg.gamma, cfg.N, cfg.m, cfg.delta)
    if cfg.model == "group":
        half = cfg.N // 2
        groups = tuple(FIRST_GROUP if k < half else SECOND_GROUP for k in range(cfg.N))
        infection = GroupInfection(rates={FIRST_GROUP: beta, SECOND_GROUP: cfg.beta2})
        population = Population(size=cfg.N, infection_groups=groups)
    else:
        locations = population_locations(cfg.N, layout_rng, cfg.mean_distance)
        infection = KernelInfection(
            beta0=beta, kernel=KernelSpec(kind="exponential_decay", rate=cfg.kernel_rate)
        )
        population = Population(size=cfg.N, locations=tuple(tuple(map(float, row)) for row in locations))
    return RateModel(
        infection=infection,
        removal=HomogeneousRemoval(gamma=cfg.gamma),
        erlang_shape=cfg.m,
        incubation=cfg.delta,
        population_size=cfg.N,
        population=population,
    )


def _point_estimate(
    data: Sequence[CaseRecord], model: RateModel, cfg: StudyConfig, oracle_seed: int
) -> Tuple[float, Optional[float], float]:
    """(β̂, β̂₂ for group studies, γ̂); β̂ is β̂₁ or β̂₀ for group and kernel studies."""
    gamma = mle_gamma(calibration_set(data), cfg.m)
    N, m, delta = cfg.N, cfg.m, cfg.delta
    if cfg.model == "group":
        sizes = group_sizes_from(model.population.infection_groups)
        if cfg.estimator == "mle":
            rates = mle_beta_group(data, N, sizes, delta)
        elif cfg.estimator == "bar":
            rates = impute_beta_bar_group(data, N, sizes, m, delta, gamma)
        else:
            rates = impute_beta_tilde_group(data, N, sizes, m, delta, gamma, cfg.oracle_samples, oracle_seed)
        return rates[FIRST_GROUP], rates[SECOND_GROUP], gamma
    if cfg.model == "kernel":
        kernel = model.infection.kernel
        locations = model.population.location_array()
        if cfg.estimator == "mle":
            beta = mle_beta_kernel(data, N, kernel, locations, delta)
        elif cfg.estimator == "bar":
            beta = impute_beta_bar_kernel(data, N, kernel, locations, m, delta, gamma)
        else:
            beta = impute_beta_tilde_kernel(
                data, N, kernel, locations, m, delta, gamma, cfg.oracle_samples, oracle_seed
            )
        return beta, None, gamma
    if cfg.estimator == "mle":
        return mle_beta(data, N, delta), None, gamma
    if cfg.estimator == "bar":
        return impute_beta_bar(data, N, m, delta, gamma), None, gamma
    return impute_beta_tilde(data, N, m, delta, gamma, cfg.oracle_samples, oracle_seed), None, gamma


def _bootstrap_interval(cases, beta_hat, gamma_hat, cell, r, p_missing, cfg: StudyConfig):
    boot_cfg = BootstrapConfig(
        b_out=cfg.b_out,
        b_in=cfg.b_in,
        se_reps=cfg.se_reps,
        omega=cfg.omega,
        alpha=cfg.alpha,
        p_missing=p_missing,
        p_inf_missing=cfg.p_inf_missing,
        seed=child_seed(stream(cfg.seed, cell, r, OUTER)),
        max_tries=cfg.max_tries,
        missingness_mode=cfg.missingness_mode,
        estimator=cfg.estimator,
        oracle_samples=cfg.oracle_samples,
    )
    result = bootstrap_t(cases, beta_hat, gamma_hat, cfg.N, boot_cfg, cfg.m, cfg.delta)
    return result.beta.lower, result.beta.upper, result.beta.midpoint


def _mcmc_interval(cases, cell, r, cfg: StudyConfig):
    prior = PriorSpec(
        xi_beta=cfg.prior_shape,
        zeta_beta=cfg.prior_rate,
        xi_gamma=cfg.prior_shape,
        zeta_gamma=cfg.prior_rate,
    )
    chain = run_damcmc(
        cases,
        prior,
        cfg.N,
        cfg.m,
        cfg.delta,
        T1=cfg.mcmc_iterations,
        rng_seed=stream(cfg.seed, cell, r, MCMC),
    )
    draws = chain.discard(cfg.mcmc_burn_in).beta
    lower, upper = np.quantile(draws, [cfg.alpha / 2, 1 - cfg.alpha / 2])
    return float(lower), float(upper), float(draws.mean())


def run_replicate(task: Tuple[Dict[str, Any], int], cfg: StudyConfig) -> Dict[str, Any]:
    """
    One study replicate: a retained outbreak, its masked copy, the point
    estimate and (optionally) an interval for β.

    The ``mle`` estimator is the complete-data benchmark and sees the outbreak
    before masking.
    """
    cell, r = task
    row: Dict[str, Any] = {
        "cell": cell["cell"],
        "replicate": r,
        "beta": cell["beta"],
        "p_missing": cell["p_missing"],
        "status": "ok",
        "n": None,
        "n_missing": None,
        "gamma_hat": None,
        "beta_hat": None,
        "beta2_hat": None,
        "R0_hat": None,
        "lower": None,
        "upper": None,
        "midpoint": None,
        "covered": None,
        "width": None,
    }
    model = study_model(cfg, cell["beta"], stream(cfg.seed, cell["cell"], r, LAYOUT))
    try:
        log = simulate_until(
            model,
            lambda run: run.n >= cfg.min_epidemic_size,
            max_tries=cfg.max_tries,
            rng_seed=stream(cfg.seed, cell["cell"], r, SIMULATE),
            target=f"n>={cfg.min_epidemic_size}",
        )
    except ConditioningFailed:
        row["status"] = "conditioning"
        return row

    masked, report = inject_missingness(
        log.cases, cell["p_missing"], cfg.p_inf_missing, stream(cfg.seed, cell["cell"], r, MASK)
    )
    row["n"] = log.n
    row["n_missing"] = report.n_missing
    data = log.cases if cfg.estimator == "mle" else masked
    oracle_seed = child_seed(stream(cfg.seed, cell["cell"], r, ORACLE))
    try:
        beta_hat, beta2_hat, gamma_hat = _point_estimate(data, model, cfg, oracle_seed)
    except (EstimationError, NoClosedFormError) as exc:
        row["status"] = "calibration"
        logger.debug(f"cell {cell['cell']} replicate {r}: no estimate ({exc.message})")
        return row
    row.update(gamma_hat=gamma_hat, beta_hat=beta_hat, beta2_hat=beta2_hat, R0_hat=beta_hat / gamma_hat)

    try:
        if cfg.interval == "bootstrap":
            p_missing = 0.0 if cfg.estimator == "mle" else cell["p_missing"]
            lower, upper, midpoint = _bootstrap_interval(
                data, beta_hat, gamma_hat, cell["cell"], r, p_missing, cfg
            )
        elif cfg.interval == "mcmc":
            lower, upper, midpoint = _mcmc_interval(masked, cell["cell"], r, cfg)
        else:
            return row
    except (ConditioningFailed, EstimationError, NoClosedFormError) as exc:
        row["status"] = "interval"
        logger.debug(f"cell {cell['cell']} replicate {r}: no interval ({exc.message})")
        return row
    row.update(
        lower=lower,
        upper=upper,
        midpoint=midpoint,
        covered=bool(lower <= cell["beta"] <= upper),
        width=upper - lower,
    )
    return row


def run_replicates(state: StudyState) -> StudyState:
    """
    Node 2: Runs every (cell, replicate) task; rows come back in task order
    whatever the number of workers.
    """
    cfg = state["config"]
    tasks = [(cell, r) for cell in state["cells"] for r in range(cfg.replicates)]
    logger.info(
        f"[bold magenta]Running {len(tasks)} replicates[/] on {cfg.workers} worker(s)",
        extra={"markup": True},
    )
    work = partial(run_replicate, cfg=cfg)
    if cfg.workers <= 1:
        records = [work(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(work, tasks))
    return {"records": records}


def _median(values: List[float]) -> float:
    return float(np.median(values)) if values else math.nan


def summarize(state: StudyState) -> StudyState:
    """
    Node 3: Coverage, mean width and bias of the retained replicates per cell.
    """
    logger.info("[bold green]Summarizing cells...[/]", extra={"markup": True})
    summary = []
    for cell in state["cells"]:
        rows = [row for row in state["records"] if row["cell"] == cell["cell"]]
        estimated = [row for row in rows if row["beta_hat"] is not None]
        intervals = [row for row in estimated if row["covered"] is not None]
        beta_hats = [row["beta_hat"] for row in estimated]
        beta2_hats = [row["beta2_hat"] for row in estimated if row.get("beta2_hat") is not None]
        midpoints = [row["midpoint"] for row in intervals]
        summary.append(
            {
                "cell": cell["cell"],
                "beta": cell["beta"],
                "p_complete": 1.0 - cell["p_missing"],
                "replicates": len(rows),
                "estimated": len(estimated),
                "intervals": len(intervals),
                "dropped_conditioning": sum(row["status"] == "conditioning" for row in rows),
                "dropped_calibration": sum(row["status"] == "calibration" for row in rows),
                "dropped_interval": sum(row["status"] == "interval" for row in rows),
                "median_n": _median([row["n"] for row in rows if row["n"] is not None]),
                "median_beta_hat": _median(beta_hats),
                "bias": _median(beta_hats) - cell["beta"],
                "median_beta2_hat": _median(beta2_hats),
                "median_midpoint": _median(midpoints),
                "midpoint_bias": _median(midpoints) - cell["beta"],
                "coverage": float(np.mean([row["covered"] for row in intervals])) if intervals else math.nan,
                "width": float(np.mean([row["width"] for row in intervals])) if intervals else math.nan,
            }
        )
    return {"summary": summary}


def write_reports(state: StudyState) -> StudyState:
    """
    Node 4: Writes the per-replicate and per-cell tables and the result JSON.
    Nothing in the files depends on wall-clock time or worker scheduling.
    """
    cfg = state["config"]
    out = Path(cfg.output_dir)
    files = {
        out / "replicates.csv": tidy_csv(state["records"]),
        out / "summary.csv": tidy_csv(state["summary"]),
        out / "study.json": dumps(
            envelope(
                "study",
                {"cells": state["summary"]},
                cfg.model_dump(exclude={"output_dir", "workers"}),
                cfg.seed,
            )
        ),
    }
    for path, content in files.items():
        save_report(content, str(path))
        logger.info(f"  wrote [dim]{path}[/]", extra={"markup": True})
    return {"outputs": [str(path) for path in files]}
