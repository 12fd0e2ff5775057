"""
Event-driven simulators for SIR and heterogeneous SEIR epidemics.

Individuals are numbered 0..N−1 and individual 0 is the index case, infectious
at t = 0. Infectious periods pass through m exponential stages of rate γ_j, so
they are Erlang(m, γ_j). Exposed individuals become infectious exactly δ later.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Deque, List, NamedTuple, Optional
from collections import deque

import numpy as np
from pydantic import ValidationError
from tenacity import Retrying, retry_if_result, stop_after_attempt

from .config import MAX_CONDITIONING_TRIES
from .core import CaseRecord, RateModel
from .errors import ConditioningFailed, ConfigError
from .logger import logger
from .rates import PairRates, build_pair_rates, checked_row
from .streams import SeedLike, make_rng

SUSCEPTIBLE, EXPOSED, INFECTIOUS, REMOVED = 0, 1, 2, 3


class EventKind(str, Enum):
    EXPOSURE = "exposure"
    ONSET = "infection-onset"
    STAGE = "removal-stage"
    REMOVAL = "removal"


class Event(NamedTuple):
    time: float
    kind: EventKind
    case_id: int


@dataclass(frozen=True)
class EventLog:
    """Ordered events of one run plus the infected cases they produced."""

    events: List[Event]
    cases: List[CaseRecord]
    population_size: int
    attempts: int = 1
    compartments: List[tuple] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.cases)


def simulate_sir(beta: float, gamma: float, N: int, rng_seed: SeedLike) -> EventLog:
    """Homogeneous SIR run with exponential infectious periods."""
    if not (math.isfinite(beta) and math.isfinite(gamma)):
        raise ConfigError("rates must be finite", beta=beta, gamma=gamma)
    try:
        model = RateModel.homogeneous(beta, gamma, N)
    except ValidationError as exc:
        raise ConfigError(f"invalid SIR parameters: {exc.errors()[0]['msg']}") from exc
    return simulate_seir_het(model, None, rng_seed)


def simulate_seir_het(
    model: RateModel,
    pair_rates: Optional[PairRates],
    rng_seed: SeedLike,
    track_compartments: bool = False,
) -> EventLog:
    """
    Heterogeneous SEIR run.

    The infection pressure on every individual is kept up to date as infectives
    come and go, so an event costs O(N). After an infectious onset the CTMC clock
    is redrawn; an onset due at the same instant as the clock wins.

    Args:
        model: Rate structure, Erlang shape and incubation.
        pair_rates: β_kj provider; built from the model when ``None``.
        rng_seed: Seed or generator for this run.
        track_compartments: Record (t, S, E, I, R) after every event.
    """
    if model.incubation < 0:
        raise ConfigError("incubation must be non-negative")
    N = model.population_size
    m = model.erlang_shape
    delta = model.incubation
    rates = pair_rates if pair_rates is not None else build_pair_rates(model)
    gamma = model.removal_rate_vector()
    rng = make_rng(rng_seed)

    status = np.full(N, SUSCEPTIBLE, dtype=np.int8)
    stage = np.zeros(N, dtype=int)
    exposure = np.full(N, np.nan)
    onset = np.full(N, np.nan)
    removal = np.full(N, np.nan)
    pressure = np.zeros(N)
    pending: Deque[int] = deque()
    events: List[Event] = []
    counts = [N - 1, 0, 1, 0]
    history: List[tuple] = []

    def become_infectious(k: int, t: float):
        status[k] = INFECTIOUS
        onset[k] = t
        pressure[:] += checked_row(rates, k, N)

    t = 0.0
    exposure[0] = -delta
    become_infectious(0, t)
    events.append(Event(t, EventKind.ONSET, 0))
    n_infectious = 1

    while True:
        susceptible = status == SUSCEPTIBLE
        infectious = status == INFECTIOUS
        weights = np.maximum(pressure[susceptible], 0.0) if n_infectious else np.zeros(0)
        lam_si = float(weights.sum())
        lam_ir = float(gamma[infectious].sum())
        total = lam_si + lam_ir
        t_ctmc = t + rng.exponential(1.0 / total) if total > 0 else math.inf
        t_prog = exposure[pending[0]] + delta if pending else math.inf
        if math.isinf(t_ctmc) and math.isinf(t_prog):
            break

        if t_prog <= t_ctmc:
            t = t_prog
            k = pending.popleft()
            become_infectious(k, t)
            n_infectious += 1
            counts[1] -= 1
            counts[2] += 1
            events.append(Event(t, EventKind.ONSET, k))
        else:
            t = t_ctmc
            if rng.uniform() * total < lam_si:
                j = int(rng.choice(np.flatnonzero(susceptible), p=weights / lam_si))
                exposure[j] = t
                counts[0] -= 1
                if delta > 0:
                    status[j] = EXPOSED
                    pending.append(j)
                    counts[1] += 1
                    events.append(Event(t, EventKind.EXPOSURE, j))
                else:
                    become_infectious(j, t)
                    n_infectious += 1
                    counts[2] += 1
                    events.append(Event(t, EventKind.ONSET, j))
            else:
                live = np.flatnonzero(infectious)
                k = int(rng.choice(live, p=gamma[live] / lam_ir))
                stage[k] += 1
                if stage[k] < m:
                    events.append(Event(t, EventKind.STAGE, k))
                else:
                    status[k] = REMOVED
                    removal[k] = t
                    n_infectious -= 1
                    counts[2] -= 1
                    counts[3] += 1
                    pressure[:] -= checked_row(rates, k, N)
                    if n_infectious == 0:
                        pressure[:] = 0.0
                    events.append(Event(t, EventKind.REMOVAL, k))
        if track_compartments:
            history.append((t, *counts))

    cases = _cases(model, np.flatnonzero(~np.isnan(removal)), exposure, onset, removal)
    return EventLog(events=events, cases=cases, population_size=N, compartments=history)


def _cases(model: RateModel, ids, exposure, onset, removal) -> List[CaseRecord]:
    pop = model.population
    records = []
    for k in sorted(ids, key=lambda k: (onset[k], k)):
        records.append(
            CaseRecord(
                id=int(k),
                exposure_time=float(exposure[k]),
                infection_time=float(onset[k]),
                removal_time=float(removal[k]),
                infection_group=None if pop is None or pop.infection_groups is None else pop.infection_groups[k],
                removal_group=None if pop is None or pop.removal_groups is None else pop.removal_groups[k],
                location=None if pop is None or pop.locations is None else tuple(pop.locations[k]),
            )
        )
    return records


def simulate_until(
    model: RateModel,
    accept: Callable[[EventLog], bool],
    max_tries: int = MAX_CONDITIONING_TRIES,
    rng_seed: SeedLike = 0,
    pair_rates: Optional[PairRates] = None,
    target: Optional[str] = None,
) -> EventLog:
    """
    Re-simulates until ``accept`` holds for the run.

    Raises:
        ConditioningFailed: after ``max_tries`` rejected runs.
    """
    rng = make_rng(rng_seed)
    rates = pair_rates if pair_rates is not None else build_pair_rates(model)
    attempts = 0

    def one_run() -> EventLog:
        nonlocal attempts
        attempts += 1
        return simulate_seir_het(model, rates, rng)

    def give_up(retry_state):
        raise ConditioningFailed(attempts, target)

    retrying = Retrying(
        stop=stop_after_attempt(max_tries),
        retry=retry_if_result(lambda log: not accept(log)),
        retry_error_callback=give_up,
    )
    log = retrying(one_run)
    if attempts > 1:
        logger.debug(f"accepted run of size {log.n} after {attempts} attempts")
    return replace(log, attempts=attempts)


def conditional_simulate(
    model: RateModel,
    pair_rates: Optional[PairRates],
    target_n: int,
    omega: float,
    max_tries: int = MAX_CONDITIONING_TRIES,
    rng_seed: SeedLike = 0,
) -> EventLog:
    """First run whose size lies within (1 ± ω)·target_n."""
    if not 0 < omega < 1:
        raise ConfigError("omega must lie in (0, 1)", omega=omega)
    if target_n > model.population_size:
        raise ConfigError("target size exceeds the population", target_n=target_n)
    return simulate_until(
        model,
        lambda log: within_bounds(log.n, target_n, omega),
        max_tries=max_tries,
        rng_seed=rng_seed,
        pair_rates=pair_rates,
        target=f"{target_n}±{omega:g}",
    )


def within_bounds(n: int, target_n: int, omega: float) -> bool:
    return (1 - omega) * target_n <= n <= (1 + omega) * target_n
