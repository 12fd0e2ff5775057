"""
Studentized double parametric bootstrap for β̃ and R̃₀.

Outer replicates re-simulate the outbreak at (β̃, γ̂) conditioned on a size near
the observed n, re-inject missingness and re-estimate. Each outer replicate gets
its own inner bootstrap at its re-estimated rates to studentize it. Every
replicate draws from its own seeded stream, so results do not depend on the
number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import DEFAULT_SEED, MAX_CONDITIONING_TRIES, ORACLE_FALLBACK_SAMPLES
from .core import CaseRecord, RateModel
from .errors import ConditioningFailed, EstimationError, NoClosedFormError
from .estimate import calibration_set, impute_beta_bar, impute_beta_tilde, mle_beta, mle_gamma
from .ingest import MissingnessMode, inject_missingness, observed_pattern
from .logger import logger
from .simulate import conditional_simulate
from .streams import INNER, OUTER, SE, child_seed, stream

Estimator = Literal["tilde", "bar", "mle"]


class BootstrapConfig(BaseModel):
    """
    Resampling settings. ``p_missing`` and ``p_inf_missing`` left as ``None`` are
    read off the data by ``bootstrap_t``: the share of cases with a missing
    endpoint, and the share of those missing their infection time.
    """

    model_config = ConfigDict(frozen=True)

    b_out: int = Field(default=200, ge=2)
    b_in: int = Field(default=20, ge=2)
    se_reps: int = Field(default=100, ge=2)
    omega: float = Field(default=0.1, gt=0.0, lt=1.0)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    p_missing: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_inf_missing: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    seed: int = DEFAULT_SEED
    max_tries: int = Field(default=MAX_CONDITIONING_TRIES, ge=1)
    missingness_mode: MissingnessMode = "binomial"
    estimator: Estimator = "tilde"
    oracle_samples: Optional[int] = None
    workers: int = Field(default=1, ge=1)
    percentile: bool = False

    @model_validator(mode="after")
    def _complete_data_mle(self) -> "BootstrapConfig":
        if self.estimator == "mle" and self.p_missing:
            raise ValueError("the mle estimator needs complete replicates (p_missing = 0)")
        return self


class ReplicateOutcome(BaseModel):
    """One outer replicate; ``status`` is ``ok`` or the reason it was dropped."""

    b: int
    status: Literal["ok", "conditioning", "calibration", "zero_se"]
    n_star: Optional[int] = None
    attempts: int = 0
    beta: Optional[float] = None
    R0: Optional[float] = None
    t_beta: Optional[float] = None
    t_R0: Optional[float] = None


class IntervalResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    parameter: Literal["beta", "R0"]
    estimate: float
    lower: float
    upper: float
    midpoint: float
    se: float
    t_lower: float
    t_upper: float
    alpha: float
    replicates: int
    percentile: Optional[Tuple[float, float]] = None
    basic: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _ordered(self) -> "IntervalResult":
        if not self.lower <= self.midpoint <= self.upper:
            raise ValueError("interval endpoints out of order")
        return self


class BootstrapResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: IntervalResult
    R0: IntervalResult
    gamma: float
    n: int
    dropped_conditioning: int
    dropped_calibration: int
    dropped_zero_se: int
    replicates: List[ReplicateOutcome]


def empirical_quantile(samples: Sequence[float], q: float) -> float:
    """Order-statistic quantile, linear between the closest ranks."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EstimationError("quantile of an empty sample")
    if not 0 <= q <= 1:
        raise EstimationError("quantile level must lie in [0, 1]", q=q)
    return float(np.quantile(values, q, method="linear"))


def bootstrap_t_interval(
    estimate: float, se: float, t_samples: Sequence[float], alpha: float
) -> Tuple[float, float, float, float, float]:
    """
    [θ − t*_{1−α/2}·se, θ − t*_{α/2}·se] and its midpoint.

    Returns:
        (lower, upper, midpoint, t_lower, t_upper)
    """
    t_lower = empirical_quantile(t_samples, alpha / 2)
    t_upper = empirical_quantile(t_samples, 1 - alpha / 2)
    lower = estimate - t_upper * se
    upper = estimate - t_lower * se
    return lower, upper, (lower + upper) / 2, t_lower, t_upper


def _estimate(
    cases: Sequence[CaseRecord], N: int, m: int, delta: float, cfg: BootstrapConfig, rng
) -> Tuple[float, float]:
    """(β, γ) re-estimated from a replicate; γ̂ from its complete periods."""
    gamma = mle_gamma(calibration_set(cases), m)
    if cfg.estimator == "mle":
        return mle_beta(cases, N, delta), gamma
    if cfg.estimator == "bar":
        return impute_beta_bar(cases, N, m, delta, gamma), gamma
    beta = impute_beta_tilde(cases, N, m, delta, gamma, cfg.oracle_samples, child_seed(rng))
    return beta, gamma


def resolve_missingness(cfg: BootstrapConfig, data: Sequence[CaseRecord]) -> BootstrapConfig:
    """Fills unset missingness probabilities from the observed mask of ``data``."""
    observed = observed_pattern(data)
    update = {}
    if cfg.p_missing is None:
        update["p_missing"] = observed.n_missing / observed.n if observed.n else 0.0
    if cfg.p_inf_missing is None:
        update["p_inf_missing"] = (
            len(observed.missing_infection) / observed.n_missing if observed.n_missing else 0.5
        )
    return cfg.model_copy(update=update) if update else cfg


def _resample(
    model: RateModel,
    target_n: int,
    cfg: BootstrapConfig,
    rng,
    counts: Optional[Tuple[int, int]],
):
    """Simulate near ``target_n``, mask and re-estimate; returns (log, β, γ)."""
    log = conditional_simulate(model, None, target_n, cfg.omega, cfg.max_tries, rng)
    masked, _ = inject_missingness(
        log.cases, cfg.p_missing, cfg.p_inf_missing, rng, cfg.missingness_mode, counts
    )
    beta, gamma = _estimate(masked, model.population_size, model.erlang_shape, model.incubation, cfg, rng)
    return log, beta, gamma


def _outer_replicate(
    b: int,
    model: RateModel,
    target_n: int,
    beta_hat: float,
    r0_hat: float,
    cfg: BootstrapConfig,
    counts: Optional[Tuple[int, int]],
) -> ReplicateOutcome:
    rng = stream(cfg.seed, OUTER, b)
    try:
        log, beta, gamma = _resample(model, target_n, cfg, rng, counts)
    except ConditioningFailed as exc:
        return ReplicateOutcome(b=b, status="conditioning", attempts=exc.attempts)
    except (EstimationError, NoClosedFormError):
        return ReplicateOutcome(b=b, status="calibration")

    inner_model = RateModel.homogeneous(beta, gamma, model.population_size, model.erlang_shape, model.incubation)
    r0 = beta / gamma
    inner_beta, inner_r0 = [], []
    for c in range(cfg.b_in):
        inner_rng = stream(cfg.seed, INNER, b, c)
        try:
            _, beta_in, gamma_in = _resample(inner_model, log.n, cfg, inner_rng, counts)
        except (ConditioningFailed, EstimationError, NoClosedFormError):
            continue
        inner_beta.append(beta_in)
        inner_r0.append(beta_in / gamma_in)

    se_beta = float(np.std(inner_beta, ddof=1)) if len(inner_beta) > 1 else 0.0
    se_r0 = float(np.std(inner_r0, ddof=1)) if len(inner_r0) > 1 else 0.0
    if se_beta == 0 or se_r0 == 0:
        return ReplicateOutcome(b=b, status="zero_se", n_star=log.n, attempts=log.attempts)
    return ReplicateOutcome(
        b=b,
        status="ok",
        n_star=log.n,
        attempts=log.attempts,
        beta=beta,
        R0=r0,
        t_beta=(beta - beta_hat) / se_beta,
        t_R0=(r0 - r0_hat) / se_r0,
    )


def _se_replicate(b: int, model: RateModel, target_n: int, cfg: BootstrapConfig, counts):
    rng = stream(cfg.seed, SE, b)
    try:
        _, beta, gamma = _resample(model, target_n, cfg, rng, counts)
    except (ConditioningFailed, EstimationError, NoClosedFormError):
        return None
    return beta, beta / gamma


def _run(fn, items: Sequence[int], workers: int) -> list:
    """Maps ``fn`` over ``items`` keeping submission order."""
    if workers <= 1:
        return [fn(b) for b in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def bootstrap_t(
    data: Sequence[CaseRecord],
    beta_hat: float,
    gamma_hat: float,
    N: int,
    cfg: BootstrapConfig,
    m: int = 1,
    delta: float = 0.0,
) -> BootstrapResult:
    """
    Bootstrap-t intervals for β and R₀ around the point estimates (β̃, γ̂).

    Unset missingness probabilities come from the observed mask of ``data``;
    with m > 1 and no ``oracle_samples`` the Monte Carlo fallback uses the
    package default sample count.

    Raises:
        ConditioningFailed: more than half the outer replicates could not be conditioned.
        EstimationError: fewer than two replicates survive.
    """
    if not (beta_hat > 0 and gamma_hat > 0):
        raise EstimationError("bootstrap needs positive β̃ and γ̂", beta=beta_hat, gamma=gamma_hat)
    cfg = resolve_missingness(cfg, data)
    if m > 1 and cfg.oracle_samples is None:
        cfg = cfg.model_copy(update={"oracle_samples": ORACLE_FALLBACK_SAMPLES})
    n = len(data)
    model = RateModel.homogeneous(beta_hat, gamma_hat, N, m, delta)
    r0_hat = beta_hat / gamma_hat
    counts = None
    if cfg.missingness_mode == "mirror":
        pattern = observed_pattern(data)
        counts = (len(pattern.missing_infection), len(pattern.missing_removal))

    logger.info(
        f"[bold cyan]Bootstrap[/] n={n}, B_out={cfg.b_out}, B_in={cfg.b_in}, workers={cfg.workers}",
        extra={"markup": True},
    )
    outer = partial(
        _outer_replicate,
        model=model,
        target_n=n,
        beta_hat=beta_hat,
        r0_hat=r0_hat,
        cfg=cfg,
        counts=counts,
    )
    outcomes: List[ReplicateOutcome] = _run(outer, range(cfg.b_out), cfg.workers)

    failed = sum(o.status == "conditioning" for o in outcomes)
    if failed > cfg.b_out / 2:
        raise ConditioningFailed(
            max(o.attempts for o in outcomes), target=f"{failed}/{cfg.b_out} outer replicates near n={n}"
        )
    survivors = [o for o in outcomes if o.status == "ok"]
    dropped_zero = sum(o.status == "zero_se" for o in outcomes)
    dropped_calibration = sum(o.status == "calibration" for o in outcomes)
    if dropped_zero or failed or dropped_calibration:
        logger.warning(
            f"dropped replicates: {failed} conditioning, {dropped_calibration} calibration, {dropped_zero} zero SE"
        )
    if len(survivors) < 2:
        raise EstimationError("fewer than two bootstrap replicates survived", survivors=len(survivors))

    se_run = partial(_se_replicate, model=model, target_n=n, cfg=cfg, counts=counts)
    se_draws = [d for d in _run(se_run, range(cfg.se_reps), cfg.workers) if d is not None]
    if len(se_draws) < 2:
        raise EstimationError("standard error run produced fewer than two estimates")
    se_beta = float(np.std([d[0] for d in se_draws], ddof=1))
    se_r0 = float(np.std([d[1] for d in se_draws], ddof=1))

    beta_interval = _interval("beta", beta_hat, se_beta, survivors, cfg)
    r0_interval = _interval("R0", r0_hat, se_r0, survivors, cfg)
    return BootstrapResult(
        beta=beta_interval,
        R0=r0_interval,
        gamma=gamma_hat,
        n=n,
        dropped_conditioning=failed,
        dropped_calibration=dropped_calibration,
        dropped_zero_se=dropped_zero,
        replicates=outcomes,
    )


def _interval(
    parameter: str, estimate: float, se: float, survivors: List[ReplicateOutcome], cfg: BootstrapConfig
) -> IntervalResult:
    t_samples = [getattr(o, f"t_{parameter}") for o in survivors]
    lower, upper, midpoint, t_lower, t_upper = bootstrap_t_interval(estimate, se, t_samples, cfg.alpha)
    percentile = basic = None
    if cfg.percentile:
        draws = [getattr(o, parameter) for o in survivors]
        lo = empirical_quantile(draws, cfg.alpha / 2)
        hi = empirical_quantile(draws, 1 - cfg.alpha / 2)
        percentile = (lo, hi)
        basic = (2 * estimate - hi, 2 * estimate - lo)
    return IntervalResult(
        parameter=parameter,
        estimate=estimate,
        lower=lower,
        upper=upper,
        midpoint=midpoint,
        se=se,
        t_lower=t_lower,
        t_upper=t_upper,
        alpha=cfg.alpha,
        replicates=len(survivors),
        percentile=percentile,
        basic=basic,
    )


def covers(interval: IntervalResult, truth: float) -> bool:
    return interval.lower <= truth <= interval.upper


def width(interval: IntervalResult) -> float:
    return interval.upper - interval.lower
