"""
Rate estimators.

Every β estimator has the form (infections counted) · N / (exposure denominator).
The denominator is built from an n×n matrix of (observed or expected) τ_kj and a
vector of (observed or expected) infectious period lengths; the estimators only
differ in how those two are filled and weighted:

* ``mle_*``          complete data, observed τ_kj and durations
* ``impute_beta_tilde*``  E[τ_kj] and E[r_j − i_j] under γ̂ for missing endpoints
* ``impute_beta_bar``     missing endpoints filled with the mean period m/γ̂

γ̂ always comes from the fully observed periods only.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from .core import CaseArrays, CaseRecord, KernelSpec, index_case, tau_matrix
from .errors import DataError, EstimationError
from .exposure import expected_durations, expected_tau_matrix
from .logger import logger
from .streams import SeedLike

EstimatorTag = Literal[
    "gamma_mle", "beta_mle", "beta_tilde", "beta_bar", "beta_group", "beta_kernel", "gamma_group"
]


class EstimateResult(BaseModel):
    """One estimator's output; maps are keyed by group label."""

    model_config = ConfigDict(frozen=True)

    estimator: EstimatorTag
    value: Union[float, Dict[str, float]]
    gamma: Optional[Union[float, Dict[str, float]]] = None
    R0: Optional[Union[float, Dict[str, float]]] = None
    calibration_count: int = Field(default=0, ge=0)
    N: int
    n: int
    seed: Optional[int] = None
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _fill_r0(cls, data):
        if isinstance(data, dict) and data.get("R0") is None and data.get("gamma") is not None:
            data = {**data, "R0": reproduction_number(data["value"], data["gamma"])}
        return data


def reproduction_number(value, gamma):
    """β/γ, per group when β is grouped and γ is common."""
    if isinstance(value, dict):
        if isinstance(gamma, dict):
            return None
        return {g: v / gamma for g, v in value.items()}
    if isinstance(gamma, dict):
        return None
    return value / gamma


# ----------------- γ -----------------


def calibration_set(data: Sequence[CaseRecord]) -> List[CaseRecord]:
    """Cases with both infection and removal observed."""
    return [c for c in data if c.is_complete]


def mle_gamma(complete_cases: Sequence[CaseRecord], m: int = 1) -> float:
    """γ̂ = m·n_C / Σ (r_j − i_j) over fully observed periods."""
    durations = [c.duration for c in complete_cases if c.is_complete]
    if not durations:
        raise EstimationError("no complete infectious periods")
    return m * len(durations) / math.fsum(durations)


def mle_gamma_group(data: Sequence[CaseRecord], m: int = 1) -> Dict[str, float]:
    """γ̂_f per removal group from that group's fully observed periods."""
    groups: Dict[str, List[CaseRecord]] = {}
    for case in data:
        if case.removal_group is None:
            raise DataError(f"case {case.id} has no removal group", case_id=case.id)
        groups.setdefault(case.removal_group, []).append(case)
    rates = {}
    for label, cases in sorted(groups.items()):
        try:
            rates[label] = mle_gamma(calibration_set(cases), m)
        except EstimationError as exc:
            raise EstimationError(f"removal group {label!r}: {exc.message}", group=label) from exc
    return rates


def gamma_wald_interval(
    complete_cases: Sequence[CaseRecord], m: int = 1, alpha: float = 0.05
) -> Tuple[float, float, float]:
    """
    Normal-approximation interval for γ with se = γ̂ / √(m·n_C).

    Returns:
        (γ̂, lower, upper)
    """
    gamma_hat = mle_gamma(complete_cases, m)
    n_c = len([c for c in complete_cases if c.is_complete])
    se = gamma_hat / math.sqrt(m * n_c)
    z = stats.norm.ppf(1 - alpha / 2)
    return gamma_hat, max(gamma_hat - z * se, 0.0), gamma_hat + z * se


# ----------------- exposure terms -----------------


@dataclass(frozen=True)
class PressureTerms:
    """τ_kj matrix (row infector) and infectious period lengths of the cases."""

    arrays: CaseArrays
    tau: np.ndarray
    durations: np.ndarray
    index: int

    @property
    def n(self) -> int:
        return self.arrays.n


def complete_terms(data: Sequence[CaseRecord], delta: float = 0.0) -> PressureTerms:
    arrays = CaseArrays.from_records(data)
    if not np.all(arrays.complete):
        raise DataError("complete-data estimator given cases with missing endpoints")
    i, r = arrays.infection, arrays.removal
    return PressureTerms(
        arrays=arrays,
        tau=tau_matrix(i, r, i - delta),
        durations=r - i,
        index=index_case(arrays.ids, i, r),
    )


def tilde_terms(
    data: Sequence[CaseRecord],
    m: int,
    delta: float,
    gamma_hat: float,
    oracle_samples: Optional[int] = None,
    rng_seed: Optional[SeedLike] = None,
) -> PressureTerms:
    if not gamma_hat > 0:
        raise EstimationError("γ̂ must be positive", gamma_hat=gamma_hat)
    arrays = CaseArrays.from_records(data)
    gamma = np.full(arrays.n, gamma_hat)
    return PressureTerms(
        arrays=arrays,
        tau=expected_tau_matrix(arrays, gamma, m, delta, oracle_samples, rng_seed),
        durations=expected_durations(arrays, gamma, m),
        index=index_case(arrays.ids, arrays.infection, arrays.removal),
    )


def bar_terms(data: Sequence[CaseRecord], m: int, delta: float, gamma_hat: float) -> PressureTerms:
    if not gamma_hat > 0:
        raise EstimationError("γ̂ must be positive", gamma_hat=gamma_hat)
    arrays = CaseArrays.from_records(data)
    index = index_case(arrays.ids, arrays.infection, arrays.removal)
    mean = m / gamma_hat
    i = np.where(np.isnan(arrays.infection), arrays.removal - mean, arrays.infection)
    r = np.where(np.isnan(arrays.removal), arrays.infection + mean, arrays.removal)
    return PressureTerms(arrays=arrays, tau=tau_matrix(i, r, i - delta), durations=r - i, index=index)


# ----------------- β -----------------


def _homogeneous(terms: PressureTerms, N: int) -> float:
    n = terms.n
    if N < n:
        raise DataError(f"population size {N} below epidemic size {n}")
    if n == 1:
        logger.debug("single case: no secondary infections, β estimate is 0")
        return 0.0
    denominator = float(terms.tau.sum()) + (N - n) * float(terms.durations.sum())
    if not denominator > 0:
        raise EstimationError("exposure denominator is zero")
    return (n - 1) * N / denominator


def mle_beta(data: Sequence[CaseRecord], N: int, delta: float = 0.0) -> float:
    """β̂ = (n − 1)·N / [Σ τ_kj + (N − n)·Σ (r_j − i_j)]."""
    return _homogeneous(complete_terms(data, delta), N)


def impute_beta_tilde(
    data: Sequence[CaseRecord],
    N: int,
    m: int,
    delta: float,
    gamma_hat: float,
    oracle_samples: Optional[int] = None,
    rng_seed: Optional[SeedLike] = None,
) -> float:
    """
    β̂ with τ_kj and durations replaced by their expectations under γ̂.

    Raises:
        NoClosedFormError: a pair has no closed form and ``oracle_samples`` is None.
    """
    return _homogeneous(tilde_terms(data, m, delta, gamma_hat, oracle_samples, rng_seed), N)


def impute_beta_bar(
    data: Sequence[CaseRecord], N: int, m: int, delta: float, gamma_hat: float
) -> float:
    """β̂ on data completed with ī_j = r_j − m/γ̂ and r̄_j = i_j + m/γ̂."""
    return _homogeneous(bar_terms(data, m, delta, gamma_hat), N)


def removal_only_pair_sum(count: int, gamma_hat: float) -> float:
    """Σ E[τ_kj + τ_jk] over removal-only pairs at a common rate: |K|(|K|−1)/(2γ̂)."""
    if count < 2:
        return 0.0
    return count * (count - 1) / (2.0 * gamma_hat)


# ----------------- group and kernel variants -----------------


def _case_groups(data: Sequence[CaseRecord]) -> List[str]:
    groups = []
    for case in data:
        if case.infection_group is None:
            raise DataError(f"case {case.id} has no infection group", case_id=case.id)
        groups.append(case.infection_group)
    return groups


def _grouped(
    terms: PressureTerms, data: Sequence[CaseRecord], N: int, group_sizes: Mapping[str, int]
) -> Dict[str, float]:
    """
    β̂_g = n_g·N / [Σ_{j∈G} Σ_k τ_kj + (N_g − n_g)·Σ_j d_j], where n_g and N_g both
    leave out the index case.
    """
    if N < terms.n:
        raise DataError(f"population size {N} below epidemic size {terms.n}")
    groups = np.asarray(_case_groups(data))
    unknown = set(groups) - set(group_sizes)
    if unknown:
        raise DataError(f"no group size for {sorted(unknown)}")
    if sum(group_sizes.values()) != N:
        raise DataError("group sizes must sum to the population size")
    index_group = groups[terms.index]
    not_index = np.arange(terms.n) != terms.index
    column_pressure = terms.tau.sum(axis=0)
    total_duration = float(terms.durations.sum())

    estimates = {}
    for label in sorted(group_sizes):
        in_group = groups == label
        n_g = int(np.sum(in_group & not_index))
        if n_g == 0:
            logger.debug(f"group {label!r}: no infections observed, β_g estimate is 0")
            estimates[label] = 0.0
            continue
        N_g = group_sizes[label] - (1 if label == index_group else 0)
        denominator = float(column_pressure[in_group].sum()) + (N_g - n_g) * total_duration
        if not denominator > 0:
            raise EstimationError(f"group {label!r}: exposure denominator is zero", group=label)
        estimates[label] = n_g * N / denominator
    return estimates


def mle_beta_group(
    data: Sequence[CaseRecord], N: int, group_sizes: Mapping[str, int], delta: float = 0.0
) -> Dict[str, float]:
    """Susceptible-group specific β̂_g on complete data."""
    return _grouped(complete_terms(data, delta), data, N, group_sizes)


def impute_beta_tilde_group(
    data: Sequence[CaseRecord],
    N: int,
    group_sizes: Mapping[str, int],
    m: int,
    delta: float,
    gamma_hat: float,
    oracle_samples: Optional[int] = None,
    rng_seed: Optional[SeedLike] = None,
) -> Dict[str, float]:
    terms = tilde_terms(data, m, delta, gamma_hat, oracle_samples, rng_seed)
    return _grouped(terms, data, N, group_sizes)


def impute_beta_bar_group(
    data: Sequence[CaseRecord],
    N: int,
    group_sizes: Mapping[str, int],
    m: int,
    delta: float,
    gamma_hat: float,
) -> Dict[str, float]:
    return _grouped(bar_terms(data, m, delta, gamma_hat), data, N, group_sizes)


def _kernel(
    terms: PressureTerms, N: int, kernel: KernelSpec, locations: np.ndarray
) -> float:
    """β̂₀ = (n − 1)·N / [Σ τ_kj h(x_k, x_j) + Σ_j d_j Σ_{k never infected} h(x_k, x_j)]."""
    locations = np.asarray(locations, dtype=float)
    n = terms.n
    if locations.ndim != 2 or len(locations) != N or np.any(np.isnan(locations)):
        raise DataError("kernel estimators need a location for each of the N individuals")
    ids = terms.arrays.ids
    if np.any(ids < 0) or np.any(ids >= N):
        raise DataError("case ids must index the population 0..N−1")
    if n == 1:
        return 0.0
    infected = locations[ids]
    never = np.setdiff1d(np.arange(N), ids)
    weights = kernel.matrix(infected, infected)
    escape = kernel.matrix(infected, locations[never]).sum(axis=1) if len(never) else np.zeros(n)
    denominator = float(np.sum(terms.tau * weights)) + float(np.dot(terms.durations, escape))
    if not denominator > 0:
        raise EstimationError("kernel-weighted exposure denominator is zero")
    return (n - 1) * N / denominator


def mle_beta_kernel(
    data: Sequence[CaseRecord],
    N: int,
    kernel: KernelSpec,
    locations: np.ndarray,
    delta: float = 0.0,
) -> float:
    """Baseline rate β̂₀ with β_kj = β₀·h(x_k, x_j)/N."""
    return _kernel(complete_terms(data, delta), N, kernel, locations)


def impute_beta_tilde_kernel(
    data: Sequence[CaseRecord],
    N: int,
    kernel: KernelSpec,
    locations: np.ndarray,
    m: int,
    delta: float,
    gamma_hat: float,
    oracle_samples: Optional[int] = None,
    rng_seed: Optional[SeedLike] = None,
) -> float:
    terms = tilde_terms(data, m, delta, gamma_hat, oracle_samples, rng_seed)
    return _kernel(terms, N, kernel, locations)


def impute_beta_bar_kernel(
    data: Sequence[CaseRecord],
    N: int,
    kernel: KernelSpec,
    locations: np.ndarray,
    m: int,
    delta: float,
    gamma_hat: float,
) -> float:
    return _kernel(bar_terms(data, m, delta, gamma_hat), N, kernel, locations)


def group_sizes_from(labels: Sequence[str]) -> Dict[str, int]:
    sizes: Dict[str, int] = {}
    for label in labels:
        sizes[label] = sizes.get(label, 0) + 1
    return sizes


# ----------------- dispatcher -----------------

Method = Literal["mle", "tilde", "bar", "group", "kernel", "gamma_group"]


def estimate(
    data: Sequence[CaseRecord],
    N: int,
    method: Method = "tilde",
    m: int = 1,
    delta: float = 0.0,
    group_sizes: Optional[Mapping[str, int]] = None,
    kernel: Optional[KernelSpec] = None,
    locations: Optional[np.ndarray] = None,
    oracle_samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> EstimateResult:
    """
    Runs one estimator together with γ̂ from the calibration set.

    ``group`` and ``kernel`` use the imputation estimator, which equals the
    complete-data MLE when nothing is missing.
    """
    calibration = calibration_set(data)
    n = len(data)
    flags: List[str] = []
    if n == 1:
        flags.append("no secondary infections")
    if len(calibration) < n:
        flags.append(f"{n - len(calibration)} cases with a missing endpoint")

    if method == "gamma_group":
        rates = mle_gamma_group(data, m)
        return EstimateResult(
            estimator="gamma_group",
            value=rates,
            calibration_count=len(calibration),
            N=N,
            n=n,
            seed=seed,
            flags=flags,
        )

    gamma_hat = mle_gamma(calibration, m)
    if method == "mle":
        return EstimateResult(
            estimator="beta_mle",
            value=mle_beta(data, N, delta),
            gamma=gamma_hat,
            calibration_count=len(calibration),
            N=N,
            n=n,
            seed=seed,
            flags=flags,
        )
    if method == "tilde":
        value = impute_beta_tilde(data, N, m, delta, gamma_hat, oracle_samples, seed)
        tag = "beta_tilde"
    elif method == "bar":
        value = impute_beta_bar(data, N, m, delta, gamma_hat)
        tag = "beta_bar"
    elif method == "group":
        if group_sizes is None:
            raise DataError("group estimation needs group sizes")
        value = impute_beta_tilde_group(
            data, N, group_sizes, m, delta, gamma_hat, oracle_samples, seed
        )
        flags.extend(f"group {g}: no infections observed" for g, v in value.items() if v == 0)
        tag = "beta_group"
    elif method == "kernel":
        if kernel is None or locations is None:
            raise DataError("kernel estimation needs a kernel and population locations")
        value = impute_beta_tilde_kernel(
            data, N, kernel, locations, m, delta, gamma_hat, oracle_samples, seed
        )
        tag = "beta_kernel"
    else:
        raise DataError(f"unknown method {method!r}")
    return EstimateResult(
        estimator=tag,
        value=value,
        gamma=gamma_hat,
        calibration_count=len(calibration),
        N=N,
        n=n,
        seed=seed,
        flags=flags,
    )
