"""
Domain types, pairwise infective time pressure, sufficient statistics and the
complete-data log-likelihood.

Times are dimensionless reals; every rate is per unit of the input time scale.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse, stats

from .errors import ConfigError, DataError, IncompletePairError


class CaseRecord(BaseModel):
    """One infected individual. Missing endpoints are ``None``, never sentinels."""

    model_config = ConfigDict(frozen=True)

    id: int
    exposure_time: Optional[float] = None
    infection_time: Optional[float] = None
    removal_time: Optional[float] = None
    infection_group: Optional[str] = None
    removal_group: Optional[str] = None
    location: Optional[Tuple[float, ...]] = None

    @field_validator("exposure_time", "infection_time", "removal_time")
    @classmethod
    def _finite(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not math.isfinite(value):
            raise ValueError("event times must be finite")
        return value

    @model_validator(mode="after")
    def _endpoints(self) -> "CaseRecord":
        if self.infection_time is None and self.removal_time is None:
            raise ValueError(f"case {self.id}: infection or removal time required")
        if (
            self.infection_time is not None
            and self.removal_time is not None
            and not self.removal_time > self.infection_time
        ):
            raise ValueError(f"case {self.id}: removal time must follow infection time")
        if (
            self.exposure_time is not None
            and self.infection_time is not None
            and self.exposure_time > self.infection_time
        ):
            raise ValueError(f"case {self.id}: exposure after infection onset")
        return self

    @property
    def is_complete(self) -> bool:
        return self.infection_time is not None and self.removal_time is not None

    @property
    def duration(self) -> Optional[float]:
        if not self.is_complete:
            return None
        return self.removal_time - self.infection_time


def check_incubation(data: Sequence[CaseRecord], delta: float, tol: float = 1e-9):
    """Raises DataError when an observed (exposure, infection) pair contradicts δ."""
    for case in data:
        if case.exposure_time is not None and case.infection_time is not None:
            if abs(case.infection_time - case.exposure_time - delta) > tol:
                raise DataError(
                    f"case {case.id}: infection − exposure differs from incubation {delta}",
                    case_id=case.id,
                )


class KernelSpec(BaseModel):
    """Distance kernel h(x_k, x_j) on Euclidean distance of location features."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["constant", "exponential_decay"] = "constant"
    rate: float = Field(default=0.0, ge=0.0)

    def of_distance(self, distance: np.ndarray) -> np.ndarray:
        distance = np.asarray(distance, dtype=float)
        if self.kind == "constant":
            return np.ones_like(distance)
        return np.exp(-self.rate * distance)

    def matrix(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Kernel values between every row location and every column location."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        cols = np.atleast_2d(np.asarray(cols, dtype=float))
        diff = rows[:, None, :] - cols[None, :, :]
        return self.of_distance(np.sqrt((diff**2).sum(axis=-1)))


class HomogeneousInfection(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["homogeneous"] = "homogeneous"
    beta: float = Field(ge=0.0)


class GroupInfection(BaseModel):
    """β_g applies to susceptibles of infection group g, whoever the infector."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["group"] = "group"
    rates: Dict[str, float]

    @field_validator("rates")
    @classmethod
    def _non_negative(cls, rates: Dict[str, float]) -> Dict[str, float]:
        if not rates or any(v < 0 for v in rates.values()):
            raise ValueError("group infection rates must be non-empty and non-negative")
        return rates


class KernelInfection(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["kernel"] = "kernel"
    beta0: float = Field(ge=0.0)
    kernel: KernelSpec = KernelSpec()


class HomogeneousRemoval(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["homogeneous"] = "homogeneous"
    gamma: float = Field(gt=0.0)


class GroupRemoval(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["group"] = "group"
    rates: Dict[str, float]

    @field_validator("rates")
    @classmethod
    def _positive(cls, rates: Dict[str, float]) -> Dict[str, float]:
        if not rates or any(v <= 0 for v in rates.values()):
            raise ValueError("group removal rates must be non-empty and positive")
        return rates


InfectionStructure = Union[HomogeneousInfection, GroupInfection, KernelInfection]
RemovalStructure = Union[HomogeneousRemoval, GroupRemoval]


class Population(BaseModel):
    """Per-individual features, indexed by case id 0..size−1."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(ge=2)
    infection_groups: Optional[Tuple[str, ...]] = None
    removal_groups: Optional[Tuple[str, ...]] = None
    locations: Optional[Tuple[Tuple[float, ...], ...]] = None

    @model_validator(mode="after")
    def _lengths(self) -> "Population":
        for name in ("infection_groups", "removal_groups", "locations"):
            value = getattr(self, name)
            if value is not None and len(value) != self.size:
                raise ValueError(f"{name} must have one entry per individual ({self.size})")
        return self

    def location_array(self) -> np.ndarray:
        if self.locations is None:
            raise ConfigError("population has no locations")
        return np.asarray(self.locations, dtype=float)

    def group_sizes(self) -> Dict[str, int]:
        if self.infection_groups is None:
            raise ConfigError("population has no infection groups")
        labels, counts = np.unique(np.asarray(self.infection_groups), return_counts=True)
        return {str(label): int(count) for label, count in zip(labels, counts)}


class RateModel(BaseModel):
    """Infection and removal structure of a pair-based SEIR model."""

    model_config = ConfigDict(frozen=True)

    infection: InfectionStructure = Field(discriminator="kind")
    removal: RemovalStructure = Field(discriminator="kind")
    erlang_shape: int = Field(default=1, ge=1)
    incubation: float = Field(default=0.0, ge=0.0)
    population_size: int = Field(ge=2)
    population: Optional[Population] = None

    @model_validator(mode="after")
    def _population_features(self) -> "RateModel":
        pop = self.population
        if pop is not None and pop.size != self.population_size:
            raise ValueError("population size disagrees with population_size")
        if isinstance(self.infection, GroupInfection):
            if pop is None or pop.infection_groups is None:
                raise ValueError("group infection rates need population infection groups")
            unknown = set(pop.infection_groups) - set(self.infection.rates)
            if unknown:
                raise ValueError(f"no infection rate for groups {sorted(unknown)}")
        if isinstance(self.infection, KernelInfection) and self.infection.kernel.kind != "constant":
            if pop is None or pop.locations is None:
                raise ValueError("kernel infection rates need population locations")
        if isinstance(self.removal, GroupRemoval):
            if pop is None or pop.removal_groups is None:
                raise ValueError("group removal rates need population removal groups")
        return self

    @classmethod
    def homogeneous(
        cls,
        beta: float,
        gamma: float,
        population_size: int,
        erlang_shape: int = 1,
        incubation: float = 0.0,
    ) -> "RateModel":
        return cls(
            infection=HomogeneousInfection(beta=beta),
            removal=HomogeneousRemoval(gamma=gamma),
            erlang_shape=erlang_shape,
            incubation=incubation,
            population_size=population_size,
        )

    def removal_rate_vector(self) -> np.ndarray:
        """γ_j for every individual of the population."""
        if isinstance(self.removal, HomogeneousRemoval):
            return np.full(self.population_size, self.removal.gamma)
        return np.array([self.removal.rates[g] for g in self.population.removal_groups])

    def removal_rates_for(self, data: Sequence[CaseRecord]) -> np.ndarray:
        """γ_j for each infected case, by its removal group when rates are grouped."""
        if isinstance(self.removal, HomogeneousRemoval):
            return np.full(len(data), self.removal.gamma)
        try:
            return np.array([self.removal.rates[_removal_group(c, self.population)] for c in data])
        except KeyError as exc:
            raise DataError(f"no removal rate for group {exc}") from exc


def _removal_group(case: CaseRecord, population: Optional[Population]) -> str:
    if case.removal_group is not None:
        return case.removal_group
    if population is not None and population.removal_groups is not None:
        return population.removal_groups[case.id]
    raise DataError(f"case {case.id} has no removal group", case_id=case.id)


class ObservationPattern(str, Enum):
    """Which of {i_k, r_k, i_j, r_j} are observed for the ordered pair (k, j)."""

    R_K_R_J = "r_k,r_j"
    I_K_I_J = "i_k,i_j"
    R_K_I_J = "r_k,i_j"
    R_J_I_K = "r_j,i_k"
    R_K_R_J_I_K = "r_k,r_j,i_k"
    R_K_R_J_I_J = "r_k,r_j,i_j"
    R_J_I_K_I_J = "r_j,i_k,i_j"
    COMPLETE = "complete"

    @property
    def canonical(self) -> "ObservationPattern":
        # r_j adds nothing once i_j is observed
        return _ALIASES.get(self, self)

    @classmethod
    def classify(cls, k: CaseRecord, j: CaseRecord) -> "ObservationPattern":
        return classify_flags(
            k.infection_time is not None,
            k.removal_time is not None,
            j.infection_time is not None,
            j.removal_time is not None,
        )


_ALIASES = {
    ObservationPattern.R_K_R_J_I_J: ObservationPattern.R_K_I_J,
    ObservationPattern.R_J_I_K_I_J: ObservationPattern.I_K_I_J,
}


def classify_flags(k_inf: bool, k_rem: bool, j_inf: bool, j_rem: bool) -> ObservationPattern:
    if k_inf and k_rem:
        return ObservationPattern.COMPLETE if j_inf else ObservationPattern.R_K_R_J_I_K
    if k_inf:
        if j_inf:
            return ObservationPattern.R_J_I_K_I_J if j_rem else ObservationPattern.I_K_I_J
        return ObservationPattern.R_J_I_K
    if j_inf:
        return ObservationPattern.R_K_R_J_I_J if j_rem else ObservationPattern.R_K_I_J
    return ObservationPattern.R_K_R_J


# ----------------- Array views -----------------


@dataclass(frozen=True)
class CaseArrays:
    """Column view of a case list; missing endpoints are NaN."""

    ids: np.ndarray
    infection: np.ndarray
    removal: np.ndarray

    @classmethod
    def from_records(cls, data: Sequence[CaseRecord]) -> "CaseArrays":
        nan = float("nan")
        return cls(
            ids=np.array([c.id for c in data], dtype=int),
            infection=np.array(
                [nan if c.infection_time is None else c.infection_time for c in data], dtype=float
            ),
            removal=np.array(
                [nan if c.removal_time is None else c.removal_time for c in data], dtype=float
            ),
        )

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def complete(self) -> np.ndarray:
        return ~np.isnan(self.infection) & ~np.isnan(self.removal)


def index_case(ids: np.ndarray, infection: np.ndarray, removal: np.ndarray) -> int:
    """
    Position of the index case: minimum observed infection time, ties to the
    smallest id; without any infection time, the minimum removal time.
    """
    times = infection if np.any(~np.isnan(infection)) else removal
    keyed = np.where(np.isnan(times), np.inf, times)
    return int(np.lexsort((ids, keyed))[0])


def tau_matrix(infection: np.ndarray, removal: np.ndarray, exposure: np.ndarray) -> np.ndarray:
    """T[k, j] = r_k ∧ e_j − e_j ∧ i_k with a zero diagonal."""
    e = exposure[None, :]
    tau = np.minimum(removal[:, None], e) - np.minimum(e, infection[:, None])
    np.fill_diagonal(tau, 0.0)
    return tau


def infector_counts(infection: np.ndarray, removal: np.ndarray, exposure: np.ndarray) -> np.ndarray:
    """Number of cases k ≠ j infectious at j's exposure, 1(i_k < e_j < r_k)."""
    e = exposure[None, :]
    live = (infection[:, None] < e) & (e < removal[:, None])
    np.fill_diagonal(live, False)
    return live.sum(axis=0)


def log_infector_product(counts: np.ndarray, index: int) -> float:
    """log C, the log of the product of infector counts over non-index cases."""
    others = np.delete(counts, index)
    if np.any(others == 0):
        return -math.inf
    return float(np.log(others).sum())


# ----------------- Operations -----------------


def pairwise_tau(k: CaseRecord, j: CaseRecord, delta: float = 0.0) -> float:
    """
    Total time k could infect j: r_k ∧ e_j − e_j ∧ i_k with e_j = i_j − δ.

    Raises:
        IncompletePairError: if r_k, i_k or j's exposure cannot be determined.
    """
    if k.infection_time is None:
        raise IncompletePairError(k.id, j.id, "i_k")
    if k.removal_time is None:
        raise IncompletePairError(k.id, j.id, "r_k")
    if j.infection_time is not None:
        e_j = j.infection_time - delta
    elif j.exposure_time is not None:
        e_j = j.exposure_time
    else:
        raise IncompletePairError(k.id, j.id, "i_j")
    return min(k.removal_time, e_j) - min(e_j, k.infection_time)


@dataclass(frozen=True)
class SufficientStats:
    """
    A = Σ (r_j − i_j); B = Σ_k Σ_{j≠k} τ_kj + (N − n)·A; C kept as log C.
    ``tau`` holds the non-zero τ_kj of infected pairs.
    """

    A: float
    B: float
    log_C: float
    n: int
    tau: sparse.csr_matrix

    @property
    def C(self) -> float:
        return math.exp(self.log_C) if self.log_C > -math.inf else 0.0


def _require_complete(data: Sequence[CaseRecord]) -> CaseArrays:
    arrays = CaseArrays.from_records(data)
    if not np.all(arrays.complete):
        missing = [int(i) for i in arrays.ids[~arrays.complete]]
        raise DataError(f"cases {missing} are not fully observed", case_ids=missing)
    return arrays


def sufficient_stats(data: Sequence[CaseRecord], N: int, delta: float = 0.0) -> SufficientStats:
    """Sufficient statistics of the complete-data likelihood under homogeneous rates."""
    arrays = _require_complete(data)
    if N < arrays.n:
        raise DataError(f"population size {N} below epidemic size {arrays.n}")
    i, r = arrays.infection, arrays.removal
    e = i - delta
    A = float(np.sum(r - i))
    tau = tau_matrix(i, r, e)
    B = float(tau.sum()) + (N - arrays.n) * A
    counts = infector_counts(i, r, e)
    log_c = log_infector_product(counts, index_case(arrays.ids, i, r))
    return SufficientStats(A=A, B=B, log_C=log_c, n=arrays.n, tau=sparse.csr_matrix(tau))


def erlang_logpdf(duration: np.ndarray, gamma: np.ndarray, m: int) -> np.ndarray:
    return stats.gamma.logpdf(duration, a=m, scale=1.0 / np.asarray(gamma, dtype=float))


def infected_pair_rates(data: Sequence[CaseRecord], model: RateModel) -> np.ndarray:
    """β_kj between infected cases (row infector, column susceptible)."""
    n = len(data)
    N = model.population_size
    infection = model.infection
    if isinstance(infection, HomogeneousInfection):
        return np.full((n, n), infection.beta / N)
    if isinstance(infection, GroupInfection):
        groups = [_infection_group(c, model.population) for c in data]
        col = np.array([infection.rates[g] for g in groups]) / N
        return np.tile(col, (n, 1))
    locs = _case_locations(data, model.population)
    return infection.beta0 / N * infection.kernel.matrix(locs, locs)


def escape_rates(data: Sequence[CaseRecord], model: RateModel) -> np.ndarray:
    """Σ_{k never infected} β_jk for each infected j."""
    n = len(data)
    N = model.population_size
    infection = model.infection
    if isinstance(infection, HomogeneousInfection):
        return np.full(n, (N - n) * infection.beta / N)
    infected = {c.id for c in data}
    never = [k for k in range(N) if k not in infected]
    if len(never) != N - n:
        raise DataError("case ids must index the population 0..N−1")
    if isinstance(infection, GroupInfection):
        groups = model.population.infection_groups
        total = sum(infection.rates[groups[k]] for k in never) / N
        return np.full(n, total)
    locs = _case_locations(data, model.population)
    pop_locs = model.population.location_array() if model.population is not None else None
    if infection.kernel.kind == "constant" or pop_locs is None:
        return np.full(n, (N - n) * infection.beta0 / N)
    return infection.beta0 / N * infection.kernel.matrix(locs, pop_locs[never]).sum(axis=1)


def _infection_group(case: CaseRecord, population: Optional[Population]) -> str:
    if case.infection_group is not None:
        return case.infection_group
    if population is not None and population.infection_groups is not None:
        return population.infection_groups[case.id]
    raise DataError(f"case {case.id} has no infection group", case_id=case.id)


def _case_locations(data: Sequence[CaseRecord], population: Optional[Population]) -> np.ndarray:
    rows = []
    for case in data:
        if case.location is not None:
            rows.append(case.location)
        elif population is not None and population.locations is not None:
            rows.append(population.locations[case.id])
        else:
            raise DataError(f"case {case.id} has no location", case_id=case.id)
    return np.asarray(rows, dtype=float)


def complete_loglik(data: Sequence[CaseRecord], model: RateModel) -> float:
    """
    Complete-data log-likelihood: Erlang period densities, escape of every
    infected case until its exposure, the infection hazard at each non-index
    exposure and the pressure on never-infected individuals.
    Returns -inf when some non-index case had no live infector.
    """
    arrays = _require_complete(data)
    if model.population_size < arrays.n:
        raise DataError("population size below epidemic size")
    i, r = arrays.infection, arrays.removal
    e = i - model.incubation
    durations = r - i
    loglik = float(erlang_logpdf(durations, model.removal_rates_for(data), model.erlang_shape).sum())

    rates = infected_pair_rates(data, model)
    tau = tau_matrix(i, r, e)
    loglik -= float(np.sum(rates * tau))
    loglik -= float(np.sum(durations * escape_rates(data, model)))

    live = (i[:, None] < e[None, :]) & (e[None, :] < r[:, None])
    np.fill_diagonal(live, False)
    hazard = np.sum(rates * live, axis=0)
    idx = index_case(arrays.ids, i, r)
    hazard = np.delete(hazard, idx)
    if np.any(hazard <= 0):
        return -math.inf
    return loglik + float(np.log(hazard).sum())


def records_sorted(data: Sequence[CaseRecord]) -> List[CaseRecord]:
    return sorted(data, key=lambda c: c.id)
