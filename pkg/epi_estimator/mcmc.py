"""
Data-augmented Metropolis-within-Gibbs sampler for (β_N, γ).

Missing infection or removal times are latent. Each iteration draws γ and β_N
from their conjugate Gamma conditionals and then makes T₂ independence
proposals for single missing endpoints, drawing the proposed infectious period
from Erlang(m, γ). With β integrated out, the proposal density cancels the
period density and the acceptance ratio only involves the infector-count
product C and the pressure statistic B:

    log H = log C' − log C + (ξ_β + n − 1)·[log(ζ_β + B) − log(ζ_β + B')]
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core import (
    CaseArrays,
    CaseRecord,
    SufficientStats,
    index_case,
    infector_counts,
    log_infector_product,
    tau_matrix,
)
from .errors import ConfigError, DataError, EstimationError
from .logger import logger
from .streams import SeedLike, make_rng

INIT_REPAIR_TRIES = 1000


class PriorSpec(BaseModel):
    """Gamma(shape ξ, rate ζ) priors on β_N = β/N and γ."""

    model_config = ConfigDict(frozen=True)

    xi_beta: float = Field(default=1e-3, gt=0.0)
    zeta_beta: float = Field(default=1e-3, gt=0.0)
    xi_gamma: float = Field(default=1e-3, gt=0.0)
    zeta_gamma: float = Field(default=1e-3, gt=0.0)

    @property
    def gamma_mean(self) -> float:
        return self.xi_gamma / self.zeta_gamma


class GammaParams(NamedTuple):
    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))


# ----------------- augmented state -----------------


class Move(NamedTuple):
    j: int
    infection: float
    removal: float
    row: np.ndarray
    col: np.ndarray
    counts: np.ndarray
    A: float
    B: float
    log_C: float
    tau_total: float


class AugmentedState:
    """
    Current infection/removal vectors with τ, infector counts, A, B and log C
    maintained incrementally. A move of one case costs O(n).
    """

    def __init__(self, ids, infection, removal, N: int, delta: float = 0.0):
        self.ids = np.asarray(ids, dtype=int)
        self.infection = np.array(infection, dtype=float)
        self.removal = np.array(removal, dtype=float)
        if np.any(np.isnan(self.infection)) or np.any(np.isnan(self.removal)):
            raise DataError("augmented state needs every endpoint filled")
        if np.any(self.removal <= self.infection):
            raise DataError("augmented state violates removal > infection")
        self.N = N
        self.delta = delta
        self.recompute()

    @property
    def n(self) -> int:
        return len(self.ids)

    def recompute(self):
        i, r = self.infection, self.removal
        e = i - self.delta
        self.tau = tau_matrix(i, r, e)
        self.tau_total = float(self.tau.sum())
        self.counts = infector_counts(i, r, e)
        self.A = float(np.sum(r - i))
        self.B = self.tau_total + (self.N - self.n) * self.A
        self.log_C = log_infector_product(self.counts, self._index(i))

    def _index(self, infection: np.ndarray) -> int:
        return index_case(self.ids, infection, self.removal)

    def propose(self, j: int, infection: float, removal: float) -> Move:
        """Statistics after moving case j to (infection, removal); state unchanged."""
        i, r = self.infection, self.removal
        e = i - self.delta
        e_new = infection - self.delta

        row = np.minimum(removal, e) - np.minimum(e, infection)
        row[j] = 0.0
        col = np.minimum(r, e_new) - np.minimum(e_new, i)
        col[j] = 0.0

        counts = self.counts.copy()
        old_live = (i[j] < e) & (e < r[j])
        new_live = (infection < e) & (e < removal)
        old_live[j] = new_live[j] = False
        counts += new_live.astype(int) - old_live.astype(int)
        live_for_j = (i < e_new) & (e_new < r)
        live_for_j[j] = False
        counts[j] = int(live_for_j.sum())

        A = self.A - (r[j] - i[j]) + (removal - infection)
        tau_total = self.tau_total - self.tau[j, :].sum() - self.tau[:, j].sum() + row.sum() + col.sum()
        B = tau_total + (self.N - self.n) * A

        moved = i.copy()
        moved[j] = infection
        index = index_case(self.ids, moved, np.where(np.arange(self.n) == j, removal, r))
        log_c = log_infector_product(counts, index)
        return Move(j, infection, removal, row, col, counts, A, float(B), log_c, float(tau_total))

    def commit(self, move: Move):
        j = move.j
        self.infection[j] = move.infection
        self.removal[j] = move.removal
        self.tau[j, :] = move.row
        self.tau[:, j] = move.col
        self.counts = move.counts
        self.A = move.A
        self.B = move.B
        self.log_C = move.log_C
        self.tau_total = move.tau_total


def _state_from_records(data: Sequence[CaseRecord], N: int, delta: float, fill_gamma: float, m: int):
    arrays = CaseArrays.from_records(data)
    mean = m / fill_gamma
    i = np.where(np.isnan(arrays.infection), arrays.removal - mean, arrays.infection)
    r = np.where(np.isnan(arrays.removal), arrays.infection + mean, arrays.removal)
    return arrays, AugmentedState(arrays.ids, i, r, N, delta)


# ----------------- Gibbs and Hastings -----------------


def gibbs_gamma(stats: Union[SufficientStats, AugmentedState], prior: PriorSpec, m: int = 1) -> GammaParams:
    """γ | r, i ~ Gamma(ξ_γ + m·n, ζ_γ + A)."""
    return GammaParams(prior.xi_gamma + m * stats.n, prior.zeta_gamma + stats.A)


def gibbs_beta(stats: Union[SufficientStats, AugmentedState], prior: PriorSpec) -> GammaParams:
    """β_N | r, i ~ Gamma(ξ_β + n − 1, ζ_β + B); β = β_N·N."""
    return GammaParams(prior.xi_beta + max(stats.n - 1, 0), prior.zeta_beta + stats.B)


def log_hastings(state: AugmentedState, move: Move, prior: PriorSpec) -> float:
    if move.log_C == -math.inf:
        return -math.inf
    if state.log_C == -math.inf:
        return 0.0
    shape = prior.xi_beta + state.n - 1
    return (move.log_C - state.log_C) + shape * (
        math.log(prior.zeta_beta + state.B) - math.log(prior.zeta_beta + move.B)
    )


def hastings_infection(state: AugmentedState, j: int, proposed: float, prior: PriorSpec) -> float:
    """Acceptance probability for moving case j's missing infection time to ``proposed``."""
    move = state.propose(j, proposed, state.removal[j])
    return _acceptance(log_hastings(state, move, prior))


def hastings_removal(state: AugmentedState, j: int, proposed: float, prior: PriorSpec) -> float:
    """Acceptance probability for moving case j's missing removal time to ``proposed``."""
    move = state.propose(j, state.infection[j], proposed)
    return _acceptance(log_hastings(state, move, prior))


def _acceptance(log_h: float) -> float:
    return 1.0 if log_h >= 0 else math.exp(log_h)


# ----------------- sampler -----------------


@dataclass
class Chain:
    """Raw draws of one chain; burn-in and thinning are left to the caller."""

    beta_N: np.ndarray
    gamma: np.ndarray
    N: int
    infection: np.ndarray
    removal: np.ndarray
    missing_infection: np.ndarray
    missing_removal: np.ndarray
    augmented: np.ndarray
    accepted: Dict[str, int] = field(default_factory=lambda: {"infection": 0, "removal": 0})
    proposed: Dict[str, int] = field(default_factory=lambda: {"infection": 0, "removal": 0})
    T1: int = 0
    T2: int = 0

    @property
    def beta(self) -> np.ndarray:
        return self.beta_N * self.N

    @property
    def R0(self) -> np.ndarray:
        return self.beta / self.gamma

    def acceptance_rate(self, kind: str) -> float:
        return self.accepted[kind] / self.proposed[kind] if self.proposed[kind] else float("nan")

    def discard(self, burn_in: int) -> "Chain":
        """The same chain without its first ``burn_in`` draws."""
        if not 0 <= burn_in <= len(self.gamma) - 4:
            raise ConfigError("burn-in must leave at least 4 draws", burn_in=burn_in)
        return replace(
            self,
            beta_N=self.beta_N[burn_in:],
            gamma=self.gamma[burn_in:],
            augmented=self.augmented[burn_in:],
        )


def initial_state(
    data: Sequence[CaseRecord],
    N: int,
    m: int,
    delta: float,
    fill_gamma: float,
    rng: np.random.Generator,
) -> Tuple[CaseArrays, AugmentedState]:
    """
    Fills missing endpoints with the mean period m/γ; when that leaves some case
    without a live infector, redraws the missing periods from Erlang(m, γ).
    """
    arrays, state = _state_from_records(data, N, delta, fill_gamma, m)
    if state.log_C > -math.inf:
        return arrays, state
    miss_i = np.isnan(arrays.infection)
    miss_r = np.isnan(arrays.removal)
    if not (miss_i.any() or miss_r.any()):
        raise EstimationError("observed data has a case without any live infector")
    for attempt in range(INIT_REPAIR_TRIES):
        periods = rng.gamma(m, 1.0 / fill_gamma, size=arrays.n)
        i = np.where(miss_i, arrays.removal - periods, arrays.infection)
        r = np.where(miss_r, arrays.infection + periods, arrays.removal)
        state = AugmentedState(arrays.ids, i, r, N, delta)
        if state.log_C > -math.inf:
            logger.debug(f"initial augmented state repaired after {attempt + 1} redraws")
            return arrays, state
    raise EstimationError("could not find an initial augmentation with C > 0")


def run_damcmc(
    data: Sequence[CaseRecord],
    prior: PriorSpec,
    N: int,
    m: int = 1,
    delta: float = 0.0,
    T1: int = 1000,
    T2: Optional[int] = None,
    init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    rng_seed: SeedLike = 0,
) -> Chain:
    """
    Runs one chain.

    Args:
        data: Cases with at least one observed endpoint each.
        prior: Gamma priors on β_N and γ.
        N: Population size.
        m: Erlang shape.
        delta: Fixed incubation period.
        T1: Iterations.
        T2: Endpoint proposals per iteration; defaults to the number of missing endpoints.
        init: Optional (infection, removal) vectors for every case.
        rng_seed: Seed or generator.
    """
    if T1 < 1:
        raise ConfigError("T1 must be at least 1")
    if N < len(data):
        raise DataError(f"population size {N} below epidemic size {len(data)}")
    rng = make_rng(rng_seed)
    if init is None:
        arrays, state = initial_state(data, N, m, delta, prior.gamma_mean, rng)
    else:
        arrays = CaseArrays.from_records(data)
        state = AugmentedState(arrays.ids, init[0], init[1], N, delta)
        if state.log_C == -math.inf:
            logger.warning("supplied initial state has C = 0; refilling from prior-mean periods")
            arrays, state = initial_state(data, N, m, delta, prior.gamma_mean, rng)

    miss_i = np.isnan(arrays.infection)
    miss_r = np.isnan(arrays.removal)
    observed_i = arrays.infection[~miss_i].copy()
    observed_r = arrays.removal[~miss_r].copy()
    if np.any(state.infection[~miss_i] != observed_i) or np.any(state.removal[~miss_r] != observed_r):
        raise DataError("initial state must keep observed endpoints")
    missing = np.flatnonzero(miss_i | miss_r)
    sweeps = len(missing) if T2 is None else T2
    if T2 is not None and T2 < 1:
        raise ConfigError("T2 must be at least 1")

    beta_N = np.empty(T1)
    gamma = np.empty(T1)
    augmented = np.empty((T1, len(missing)))
    accepted = {"infection": 0, "removal": 0}
    proposed = {"infection": 0, "removal": 0}

    for t in range(T1):
        g = gibbs_gamma(state, prior, m).draw(rng)
        beta_N[t] = gibbs_beta(state, prior).draw(rng)
        gamma[t] = g

        if len(missing):
            for _ in range(sweeps):
                j = int(missing[rng.integers(len(missing))])
                period = rng.gamma(m, 1.0) / g
                if miss_i[j]:
                    kind = "infection"
                    move = state.propose(j, state.removal[j] - period, state.removal[j])
                else:
                    kind = "removal"
                    move = state.propose(j, state.infection[j], state.infection[j] + period)
                proposed[kind] += 1
                if math.log(rng.uniform()) < log_hastings(state, move, prior):
                    state.commit(move)
                    accepted[kind] += 1

        if np.any(state.infection[~miss_i] != observed_i) or np.any(state.removal[~miss_r] != observed_r):
            raise EstimationError(f"observed endpoint modified at iteration {t}")
        augmented[t] = np.where(miss_i[missing], state.infection[missing], state.removal[missing])

    logger.debug(
        f"chain done: infection acceptance {accepted['infection']}/{proposed['infection']}, "
        f"removal acceptance {accepted['removal']}/{proposed['removal']}"
    )
    return Chain(
        beta_N=beta_N,
        gamma=gamma,
        N=N,
        infection=state.infection.copy(),
        removal=state.removal.copy(),
        missing_infection=miss_i,
        missing_removal=miss_r,
        augmented=augmented,
        accepted=accepted,
        proposed=proposed,
        T1=T1,
        T2=sweeps,
    )


# ----------------- diagnostics -----------------


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = len(x)
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n
    return acov / acov[0]


def ess(values: Sequence[float]) -> float:
    """
    Autocorrelation-sum effective sample size with Geyer's initial positive
    (and monotone) sequence truncation. The integrated autocorrelation time is
    floored at 1/log10(L), so anticorrelated chains report ESS > L.
    """
    x = np.asarray(values, dtype=float)
    L = len(x)
    if L < 4:
        raise ConfigError("ESS needs at least 4 draws")
    if np.allclose(x, x[0]):
        return float(L)
    rho = _autocorrelation(x)
    pairs = rho[: 2 * (L // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    previous = math.inf
    for value in pairs:
        if value <= 0:
            break
        value = min(value, previous)
        total += value
        previous = value
    tau = max(-1.0 + 2.0 * total, 1.0 / math.log10(L))
    return float(L / tau)


def split_rhat(chains: Sequence[Sequence[float]]) -> float:
    """
    Potential scale reduction on chains split in halves; NaN when the
    within-chain variance is zero.
    """
    arr = np.asarray(chains, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ConfigError("split R-hat needs at least two chains of equal length")
    if arr.shape[1] < 4:
        raise ConfigError("split R-hat needs chains of length at least 4")
    half = arr.shape[1] // 2
    split = np.vstack([arr[:, :half], arr[:, arr.shape[1] - half :]])
    W = split.var(axis=1, ddof=1).mean()
    if W == 0:
        logger.warning("split R-hat undefined for constant chains")
        return float("nan")
    B = half * np.var(split.mean(axis=1), ddof=1)
    var_hat = (half - 1) / half * W + B / half
    return float(np.sqrt(var_hat / W))


def summarize_chains(chains: Sequence[Chain]) -> Dict[str, Dict[str, float]]:
    """Posterior mean, central 95% interval, ESS and split-R̂ for β, γ and R₀."""
    summary = {}
    for name in ("beta", "gamma", "R0"):
        draws = [np.asarray(getattr(c, name)) for c in chains]
        pooled = np.concatenate(draws)
        total_ess = float(sum(ess(d) for d in draws)) if len(pooled) >= 4 else float("nan")
        summary[name] = {
            "mean": float(pooled.mean()),
            "lower": float(np.quantile(pooled, 0.025)),
            "upper": float(np.quantile(pooled, 0.975)),
            "ess": total_ess,
            "ess_ratio": total_ess / len(pooled),
            "rhat": split_rhat(draws) if len(draws) >= 2 else float("nan"),
        }
    return summary
