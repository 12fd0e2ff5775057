import json
import sys
from contextlib import contextmanager
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import typer
from pydantic import ValidationError

from .bootstrap import BootstrapConfig, bootstrap_t, resolve_missingness
from .config import DEFAULT_SEED, MAX_CONDITIONING_TRIES, MAX_WORKERS, ORACLE_FALLBACK_SAMPLES
from .core import (
    CaseArrays,
    GroupInfection,
    HomogeneousInfection,
    HomogeneousRemoval,
    KernelInfection,
    KernelSpec,
    Population,
    RateModel,
    check_incubation,
)
from .errors import ConfigError, DataError, EpiEstimatorError
from .estimate import calibration_set, estimate as run_estimator, gamma_wald_interval
from .exposure import pattern_counts
from .graph import run_study
from .ingest import apply_offsets, dequantize_frame, inject_missingness
from .logger import logger
from .mcmc import PriorSpec, ess, run_damcmc, split_rhat, summarize_chains
from .rates import population_locations
from .simulate import simulate_until
from .state import load_study_config
from .streams import MASK, SIMULATE, stream
from .ui import console, print_error, print_header, print_step, print_success, print_table
from .utils import (
    dumps,
    emit,
    envelope,
    read_case_frame,
    read_case_table,
    read_population,
    records_from_frame,
    round_floats,
    save_report,
    tidy_csv,
    write_case_table,
    write_population,
)

app = typer.Typer(help="Simulate SIR/SEIR outbreaks and estimate their rates from partially observed cases.")


class OutputFormat(str, Enum):
    json = "json"
    csv = "csv"


class ModelKind(str, Enum):
    sir = "sir"
    seir = "seir"


class KernelKind(str, Enum):
    constant = "constant"
    exponential_decay = "exponential_decay"


class MethodKind(str, Enum):
    mle = "mle"
    tilde = "tilde"
    bar = "bar"
    group = "group"
    kernel = "kernel"
    gamma_group = "gamma_group"


class EstimatorKind(str, Enum):
    tilde = "tilde"
    bar = "bar"
    mle = "mle"


class MissingnessKind(str, Enum):
    binomial = "binomial"
    mirror = "mirror"


class IntervalKind(str, Enum):
    bootstrap = "bootstrap"
    mcmc = "mcmc"
    none = "none"


class StudyModelKind(str, Enum):
    homogeneous = "homogeneous"
    group = "group"
    kernel = "kernel"


# shared options
SEED = typer.Option(DEFAULT_SEED, "--seed", help="Master seed")
OUTPUT = typer.Option(OutputFormat.json, "--output", help="Result format")
OUT = typer.Option(None, "--out", "-o", help="Result file; stdout when omitted")
MODEL = typer.Option(ModelKind.sir, "--model", help="sir, or seir with a fixed incubation --delta")
SHAPE = typer.Option(1, "--m", min=1, help="Erlang shape of the infectious period")
DELTA = typer.Option(0.0, "--delta", min=0.0, help="Fixed incubation period δ")
POPULATION_SIZE = typer.Option(..., "--N", min=2, help="Population size")
INFECTION_OFFSET = typer.Option(0.0, "--infection-offset", help="Days added to infection times, e.g. -1")
REMOVAL_OFFSET = typer.Option(0.0, "--removal-offset", help="Days added to removal times, e.g. +3")
DEQUANTIZE = typer.Option(False, "--dequantize/--no-dequantize", help="Add Normal noise to day-resolution times")
NOISE_SD = typer.Option(0.1, "--noise-sd", min=0.0, help="Dequantization noise standard deviation")


@contextmanager
def handled_errors():
    """Turns package errors into a Rich error line, a JSON object on stderr and the error's exit code."""
    try:
        yield
    except ValidationError as exc:
        first = exc.errors()[0]
        _fail(ConfigError(f"invalid parameters ({'.'.join(str(p) for p in first['loc'])}): {first['msg']}"))
    except EpiEstimatorError as exc:
        _fail(exc)


def _fail(exc: EpiEstimatorError):
    print_error(exc.message, hint=f"{type(exc).__name__}, exit code {exc.exit_code}")
    sys.stderr.write(json.dumps(round_floats(exc.to_dict()), sort_keys=True) + "\n")
    raise typer.Exit(code=exc.exit_code)


def _incubation(model: ModelKind, delta: float) -> float:
    if model == ModelKind.sir and delta != 0:
        raise ConfigError("--delta needs --model seir")
    return delta


def _parse_rates(text: str) -> Dict[str, float]:
    """'a=1.5,b=0.5' -> {'a': 1.5, 'b': 0.5}"""
    rates = {}
    for item in text.split(","):
        label, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"group rate {item!r} is not label=value")
        try:
            rates[label.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"group rate {item!r} is not numeric") from exc
    return rates


def _parse_floats(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _load_cases(
    path: str,
    infection_offset: float,
    removal_offset: float,
    dequantize: bool,
    noise_sd: float,
    seed: int,
    delta: float,
):
    """Reads a CaseTable, applying reporting offsets and optional dequantization."""
    frame = read_case_frame(path)
    if infection_offset or removal_offset:
        frame = apply_offsets(frame, infection_offset, removal_offset)
    if dequantize:
        frame = dequantize_frame(frame, noise_sd, stream(seed, MASK), delta if delta > 0 else None)
    data = records_from_frame(frame)
    if not data:
        raise DataError(f"case table {path} has no cases")
    if delta > 0:
        check_incubation(data, delta, tol=1e-6)
    logger.debug(f"loaded {len(data)} cases from {path}")
    return data


def _write(
    kind: str,
    result: Any,
    config: Dict[str, Any],
    seed: Optional[int],
    output: OutputFormat,
    out: Optional[str],
    rows: Optional[List[Dict[str, Any]]] = None,
):
    if output == OutputFormat.csv:
        emit(tidy_csv(rows if rows is not None else [result]), out)
    else:
        emit(dumps(envelope(kind, result, config, seed)), out)
    if out:
        print_success(f"{kind} written to {out}")


@app.command()
def simulate(
    beta: float = typer.Option(..., help="Infection rate β (baseline β₀ with a kernel)"),
    gamma: float = typer.Option(1.0, help="Removal rate γ"),
    population_size: int = POPULATION_SIZE,
    m: int = SHAPE,
    delta: float = DELTA,
    model: ModelKind = MODEL,
    group_rates: Optional[str] = typer.Option(None, help="Infection rates per group, e.g. 'a=1.5,b=0.5'"),
    kernel: Optional[KernelKind] = typer.Option(None, help="Spatial kernel for β_kj = β₀·h(x_k, x_j)/N"),
    kernel_rate: float = typer.Option(1.0, help="Decay rate of the exponential kernel"),
    population: Optional[str] = typer.Option(None, help="Population features CSV (id, infection_group, x, y)"),
    spread: float = typer.Option(0.9, help="Mean pairwise distance of generated locations"),
    min_size: int = typer.Option(1, help="Re-simulate until the outbreak has at least this many cases"),
    events: Optional[str] = typer.Option(None, help="Also write the event log JSON here"),
    population_out: Optional[str] = typer.Option(None, help="Write generated population features here"),
    seed: int = SEED,
    output: OutputFormat = typer.Option(OutputFormat.csv, "--output", help="Result format"),
    out: Optional[str] = OUT,
):
    """
    Simulates one outbreak and writes its CaseTable.
    """
    with handled_errors():
        delta = _incubation(model, delta)
        pop: Optional[Population] = read_population(population) if population else None
        if group_rates:
            infection = GroupInfection(rates=_parse_rates(group_rates))
        elif kernel is not None:
            infection = KernelInfection(beta0=beta, kernel=KernelSpec(kind=kernel.value, rate=kernel_rate))
            if kernel == KernelKind.exponential_decay and (pop is None or pop.locations is None):
                coords = population_locations(population_size, stream(seed, SIMULATE, 1), spread)
                pop = Population(
                    size=population_size,
                    infection_groups=None if pop is None else pop.infection_groups,
                    removal_groups=None if pop is None else pop.removal_groups,
                    locations=tuple(tuple(float(v) for v in row) for row in coords),
                )
        else:
            infection = HomogeneousInfection(beta=beta)
        rate_model = RateModel(
            infection=infection,
            removal=HomogeneousRemoval(gamma=gamma),
            erlang_shape=m,
            incubation=delta,
            population_size=population_size,
            population=pop,
        )
        if min_size > population_size:
            raise ConfigError("--min-size exceeds the population size")

        print_step("Simulating outbreak", f"N={population_size}, m={m}, δ={delta:g}")
        log = simulate_until(
            rate_model,
            lambda run: run.n >= min_size,
            max_tries=MAX_CONDITIONING_TRIES,
            rng_seed=stream(seed, SIMULATE),
            target=f"n>={min_size}",
        )
        config = {
            "model": rate_model.model_dump(exclude={"population"}),
            "min_size": min_size,
        }
        event_rows = [e._asdict() for e in log.events]
        if events:
            save_report(dumps(envelope("event_log", {"events": event_rows}, config, seed)), events)
        if population_out and pop is not None:
            write_population(pop, population_out)

        if output == OutputFormat.csv:
            emit(write_case_table(log.cases), out)
        else:
            result = {"n": log.n, "attempts": log.attempts, "cases": log.cases, "events": event_rows}
            emit(dumps(envelope("simulation", result, config, seed)), out)
        print_success(f"outbreak of {log.n} cases after {log.attempts} attempt(s)")


@app.command()
def inject(
    path: str = typer.Argument(..., help="Fully observed CaseTable CSV"),
    p_missing: float = typer.Option(0.2, min=0.0, max=1.0, help="Probability a case loses one endpoint"),
    p_inf_missing: float = typer.Option(0.5, min=0.0, max=1.0, help="Probability the lost endpoint is the infection time"),
    report: Optional[str] = typer.Option(None, help="Write the mask report JSON here"),
    seed: int = SEED,
    out: Optional[str] = OUT,
):
    """
    Removes infection or removal times from a random subset of cases.
    """
    with handled_errors():
        data = read_case_table(path)
        masked, mask = inject_missingness(data, p_missing, p_inf_missing, stream(seed, MASK))
        emit(write_case_table(masked), out)
        config = {"p_missing": p_missing, "p_inf_missing": p_inf_missing, "source": path}
        if report:
            save_report(dumps(envelope("mask", mask, config, seed)), report)
        print_table(
            "Mask",
            [
                {
                    "cases": mask.n,
                    "missing infection": len(mask.missing_infection),
                    "missing removal": len(mask.missing_removal),
                    "complete": mask.n_complete,
                }
            ],
        )


def _estimate_rows(result: Dict[str, Any]) -> List[Dict[str, Any]]:
    value = result["value"]
    if not isinstance(value, dict):
        return [{k: result[k] for k in ("estimator", "value", "gamma", "R0", "N", "n", "calibration_count")}]
    rows = []
    for label in sorted(value):
        row = {"estimator": result["estimator"], "group": label, "value": value[label]}
        for key in ("gamma", "R0"):
            field = result.get(key)
            row[key] = field.get(label) if isinstance(field, dict) else field
        rows.append(row)
    return rows


@app.command()
def estimate(
    path: str = typer.Argument(..., help="CaseTable CSV"),
    population_size: int = POPULATION_SIZE,
    method: MethodKind = typer.Option(MethodKind.tilde, help="Estimator"),
    m: int = SHAPE,
    delta: float = DELTA,
    model: ModelKind = MODEL,
    population: Optional[str] = typer.Option(None, help="Population features CSV for group sizes and locations"),
    kernel: KernelKind = typer.Option(KernelKind.constant, help="Kernel of the kernel estimator"),
    kernel_rate: float = typer.Option(1.0, help="Decay rate of the exponential kernel"),
    oracle_samples: Optional[int] = typer.Option(None, help="Monte Carlo samples for pairs without a closed form"),
    alpha: float = typer.Option(0.05, help="Level of the γ Wald interval"),
    infection_offset: float = INFECTION_OFFSET,
    removal_offset: float = REMOVAL_OFFSET,
    dequantize: bool = DEQUANTIZE,
    noise_sd: float = NOISE_SD,
    seed: int = SEED,
    output: OutputFormat = OUTPUT,
    out: Optional[str] = OUT,
):
    """
    Estimates infection and removal rates from a CaseTable.
    """
    with handled_errors():
        delta = _incubation(model, delta)
        data = _load_cases(path, infection_offset, removal_offset, dequantize, noise_sd, seed, delta)
        pop = read_population(population) if population else None
        if oracle_samples is None and m > 1:
            oracle_samples = ORACLE_FALLBACK_SAMPLES
        group_sizes = pop.group_sizes() if pop is not None and pop.infection_groups is not None else None
        locations = pop.location_array() if pop is not None and pop.locations is not None else None

        print_step("Estimating", f"method={method.value}, n={len(data)}, N={population_size}")
        result = run_estimator(
            data,
            population_size,
            method=method.value,
            m=m,
            delta=delta,
            group_sizes=group_sizes,
            kernel=KernelSpec(kind=kernel.value, rate=kernel_rate),
            locations=locations,
            oracle_samples=oracle_samples,
            seed=seed,
        )
        payload = result.model_dump()
        payload["patterns"] = pattern_counts(CaseArrays.from_records(data))
        if method != MethodKind.gamma_group:
            _, lower, upper = gamma_wald_interval(calibration_set(data), m, alpha)
            payload["gamma_interval"] = [lower, upper]
        config = {
            "method": method.value,
            "N": population_size,
            "m": m,
            "delta": delta,
            "infection_offset": infection_offset,
            "removal_offset": removal_offset,
            "dequantize": dequantize,
            "noise_sd": noise_sd if dequantize else None,
            "oracle_samples": oracle_samples,
            "source": path,
        }
        rows = _estimate_rows(payload)
        print_table("Estimate", rows)
        for flag in result.flags:
            logger.warning(flag)
        _write("estimate", payload, config, seed, output, out, rows)


@app.command()
def bootstrap(
    path: str = typer.Argument(..., help="CaseTable CSV"),
    population_size: int = POPULATION_SIZE,
    m: int = SHAPE,
    delta: float = DELTA,
    model: ModelKind = MODEL,
    b_out: int = typer.Option(200, min=2, help="Outer bootstrap replicates"),
    b_in: int = typer.Option(20, min=2, help="Inner replicates per outer replicate"),
    se_reps: int = typer.Option(100, min=2, help="Replicates for the standard error of the estimate"),
    omega: float = typer.Option(0.1, help="Relative tolerance on replicate outbreak size"),
    alpha: float = typer.Option(0.05, help="Interval level is 1 − alpha"),
    p_missing: Optional[float] = typer.Option(None, help="Missingness in replicates; defaults to the observed share"),
    p_inf_missing: Optional[float] = typer.Option(None, help="Share of missing infection times; defaults to observed"),
    mode: MissingnessKind = typer.Option(MissingnessKind.binomial, help="Random or mirrored missingness"),
    estimator: EstimatorKind = typer.Option(EstimatorKind.tilde, help="Point estimator"),
    percentile: bool = typer.Option(False, help="Also report percentile and basic intervals"),
    replicates: bool = typer.Option(False, help="Include per-replicate outcomes in the JSON"),
    oracle_samples: Optional[int] = typer.Option(None, help="Monte Carlo samples for pairs without a closed form"),
    workers: int = typer.Option(MAX_WORKERS, min=1, help="Worker processes"),
    infection_offset: float = INFECTION_OFFSET,
    removal_offset: float = REMOVAL_OFFSET,
    dequantize: bool = DEQUANTIZE,
    noise_sd: float = NOISE_SD,
    seed: int = SEED,
    output: OutputFormat = OUTPUT,
    out: Optional[str] = OUT,
):
    """
    Studentized bootstrap intervals for β and R₀.
    """
    with handled_errors():
        delta = _incubation(model, delta)
        data = _load_cases(path, infection_offset, removal_offset, dequantize, noise_sd, seed, delta)
        if oracle_samples is None and m > 1:
            oracle_samples = ORACLE_FALLBACK_SAMPLES
        cfg = BootstrapConfig(
            b_out=b_out,
            b_in=b_in,
            se_reps=se_reps,
            omega=omega,
            alpha=alpha,
            p_missing=p_missing,
            p_inf_missing=p_inf_missing,
            seed=seed,
            missingness_mode=mode.value,
            estimator=estimator.value,
            oracle_samples=oracle_samples,
            workers=workers,
            percentile=percentile,
        )
        cfg = resolve_missingness(cfg, data)
        point = run_estimator(
            data, population_size, method=estimator.value, m=m, delta=delta, oracle_samples=oracle_samples, seed=seed
        )
        print_step("Bootstrapping", f"β̂={point.value:.4g}, γ̂={point.gamma:.4g}")
        with console.status("[bold white]Resampling outbreaks...[/]", spinner="dots"):
            result = bootstrap_t(data, point.value, point.gamma, population_size, cfg, m, delta)
        payload = result.model_dump(exclude=None if replicates else {"replicates"})
        rows = [i.model_dump(exclude={"percentile", "basic"}) for i in (result.beta, result.R0)]
        print_table(
            "Bootstrap-t intervals",
            rows,
            ["parameter", "estimate", "lower", "upper", "midpoint", "se", "replicates"],
        )
        config = {**cfg.model_dump(), "N": population_size, "m": m, "delta": delta, "source": path}
        _write("bootstrap", payload, config, seed, output, out, rows)


@app.command()
def mcmc(
    path: str = typer.Argument(..., help="CaseTable CSV"),
    population_size: int = POPULATION_SIZE,
    m: int = SHAPE,
    delta: float = DELTA,
    model: ModelKind = MODEL,
    chains: int = typer.Option(4, min=1, help="Independent chains"),
    iterations: int = typer.Option(5000, min=4, help="Iterations per chain"),
    burn_in: int = typer.Option(1000, min=0, help="Draws discarded at the start of each chain"),
    t2: Optional[int] = typer.Option(None, "--t2", help="Endpoint proposals per iteration"),
    xi_beta: float = typer.Option(1e-3, help="Gamma prior shape for β/N"),
    zeta_beta: float = typer.Option(1e-3, help="Gamma prior rate for β/N"),
    xi_gamma: float = typer.Option(1e-3, help="Gamma prior shape for γ"),
    zeta_gamma: float = typer.Option(1e-3, help="Gamma prior rate for γ"),
    draws: Optional[str] = typer.Option(None, help="Write the retained draws CSV here"),
    infection_offset: float = INFECTION_OFFSET,
    removal_offset: float = REMOVAL_OFFSET,
    dequantize: bool = DEQUANTIZE,
    noise_sd: float = NOISE_SD,
    seed: int = SEED,
    output: OutputFormat = OUTPUT,
    out: Optional[str] = OUT,
):
    """
    Data-augmentation MCMC for β and γ with missing endpoints imputed.
    """
    with handled_errors():
        delta = _incubation(model, delta)
        data = _load_cases(path, infection_offset, removal_offset, dequantize, noise_sd, seed, delta)
        prior = PriorSpec(xi_beta=xi_beta, zeta_beta=zeta_beta, xi_gamma=xi_gamma, zeta_gamma=zeta_gamma)
        print_step("Sampling", f"{chains} chain(s) × {iterations} iterations")
        kept = []
        with console.status("[bold white]Running chains...[/]", spinner="dots"):
            for c in range(chains):
                chain = run_damcmc(
                    data, prior, population_size, m, delta, T1=iterations, T2=t2, rng_seed=stream(seed, c)
                )
                kept.append(chain.discard(burn_in))
        summary = summarize_chains(kept)
        acceptance = [
            {
                "chain": c,
                "infection": chain.acceptance_rate("infection"),
                "removal": chain.acceptance_rate("removal"),
            }
            for c, chain in enumerate(kept)
        ]
        draw_rows = [
            {"chain": c, "iteration": burn_in + t, "beta": b, "gamma": g, "R0": r}
            for c, chain in enumerate(kept)
            for t, (b, g, r) in enumerate(zip(chain.beta, chain.gamma, chain.R0))
        ]
        if draws:
            save_report(tidy_csv(draw_rows), draws)
        print_table(
            "Posterior",
            [{"parameter": name, **stats} for name, stats in summary.items()],
            ["parameter", "mean", "lower", "upper", "ess", "rhat"],
        )
        config = {
            "N": population_size,
            "m": m,
            "delta": delta,
            "chains": chains,
            "iterations": iterations,
            "burn_in": burn_in,
            "T2": t2,
            "prior": prior.model_dump(),
            "source": path,
        }
        result = {"summary": summary, "acceptance": acceptance}
        _write("mcmc", result, config, seed, output, out, draw_rows)


@app.command()
def diagnose(
    path: str = typer.Argument(..., help="Draws CSV with a chain column, as written by mcmc --draws"),
    columns: Optional[str] = typer.Option(None, help="Comma-separated parameter columns; default all numeric"),
    output: OutputFormat = OUTPUT,
    out: Optional[str] = OUT,
):
    """
    Effective sample size and split R-hat for stored chains.
    """
    with handled_errors():
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataError(f"cannot read draws {path}: {exc}") from exc
        if "chain" not in frame.columns:
            raise DataError("draws file needs a chain column")
        if columns:
            names = [c.strip() for c in columns.split(",")]
            missing = [c for c in names if c not in frame.columns]
            if missing:
                raise DataError(f"draws file has no columns {missing}")
        else:
            names = [
                c for c in frame.select_dtypes(include="number").columns if c not in ("chain", "iteration")
            ]
        groups = [g for _, g in frame.groupby("chain", sort=True)]
        length = min(len(g) for g in groups)
        rows = []
        for name in names:
            per_chain = [g[name].to_numpy(dtype=float)[:length] for g in groups]
            rows.append(
                {
                    "parameter": name,
                    "chains": len(per_chain),
                    "draws": length,
                    "mean": float(np.mean(np.concatenate(per_chain))),
                    "ess": float(sum(ess(d) for d in per_chain)),
                    "rhat": split_rhat(per_chain) if len(per_chain) >= 2 else float("nan"),
                }
            )
        print_table("Chain diagnostics", rows)
        _write("diagnostics", {"parameters": rows}, {"columns": names, "source": path}, None, output, out, rows)


@app.command()
def study(
    config: Optional[str] = typer.Option(None, "--config", help="Flat TOML study configuration"),
    betas: Optional[str] = typer.Option(None, help="Comma-separated β grid"),
    r0s: Optional[str] = typer.Option(None, help="Comma-separated R₀ grid (β = R₀·γ)"),
    p_missing: Optional[str] = typer.Option(None, help="Comma-separated p_missing grid"),
    p_inf_missing: Optional[float] = typer.Option(None, help="Share of lost endpoints that are infection times"),
    gamma: Optional[float] = typer.Option(None, help="Removal rate γ"),
    population_size: Optional[int] = typer.Option(None, "--N", help="Population size"),
    m: Optional[int] = typer.Option(None, "--m", help="Erlang shape"),
    delta: Optional[float] = typer.Option(None, "--delta", help="Fixed incubation period δ"),
    min_size: Optional[int] = typer.Option(None, help="Retain outbreaks with at least this many cases"),
    replicates: Optional[int] = typer.Option(None, help="Replicates per cell"),
    estimator: Optional[EstimatorKind] = typer.Option(None, help="Point estimator"),
    interval: Optional[IntervalKind] = typer.Option(None, help="Interval method"),
    study_model: Optional[StudyModelKind] = typer.Option(
        None, "--model", help="Infection structure of the simulated outbreaks"
    ),
    beta2: Optional[float] = typer.Option(None, help="Fixed β₂ of the second group (group model)"),
    kernel_rate: Optional[float] = typer.Option(None, help="Distance decay rate (kernel model)"),
    mean_distance: Optional[float] = typer.Option(None, help="Mean pairwise distance of the locations (kernel model)"),
    b_out: Optional[int] = typer.Option(None, help="Outer bootstrap replicates"),
    b_in: Optional[int] = typer.Option(None, help="Inner bootstrap replicates"),
    se_reps: Optional[int] = typer.Option(None, help="Standard error replicates"),
    mcmc_iterations: Optional[int] = typer.Option(None, help="MCMC iterations per replicate"),
    mcmc_burn_in: Optional[int] = typer.Option(None, help="MCMC burn-in per replicate"),
    workers: Optional[int] = typer.Option(None, help="Worker processes"),
    output_dir: Optional[str] = typer.Option(None, help="Directory for the report files"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
):
    """
    Runs a coverage study over a grid of (β, p_missing) cells.
    """
    with handled_errors():
        cfg = load_study_config(
            config,
            {
                "betas": _parse_floats(betas),
                "r0s": _parse_floats(r0s),
                "p_missing": _parse_floats(p_missing),
                "p_inf_missing": p_inf_missing,
                "gamma": gamma,
                "N": population_size,
                "m": m,
                "delta": delta,
                "min_epidemic_size": min_size,
                "replicates": replicates,
                "estimator": estimator.value if estimator else None,
                "interval": interval.value if interval else None,
                "model": study_model.value if study_model else None,
                "beta2": beta2,
                "kernel_rate": kernel_rate,
                "mean_distance": mean_distance,
                "b_out": b_out,
                "b_in": b_in,
                "se_reps": se_reps,
                "mcmc_iterations": mcmc_iterations,
                "mcmc_burn_in": mcmc_burn_in,
                "workers": workers,
                "output_dir": output_dir,
                "seed": seed,
            },
        )
        print_header(f"{len(cfg.cells())} cells × {cfg.replicates} replicates, seed {cfg.seed}")
        print_step(
            "Study", f"model={cfg.model}, estimator={cfg.estimator}, interval={cfg.interval}, workers={cfg.workers}"
        )
        with console.status("[bold white]Running study...[/]", spinner="earth"):
            final = run_study(cfg)
        print_table(
            "Coverage",
            final["summary"],
            ["cell", "beta", "p_complete", "estimated", "median_beta_hat", "coverage", "width"],
        )
        print_success(f"reports written to {cfg.output_dir}")
        for path in final["outputs"]:
            console.print(f"[dim]{path}[/]")


if __name__ == "__main__":
    app()
