"""
Pair-rate providers: β_kj rows consumed by the event-driven simulator.
"""

from typing import Dict, Optional, Protocol

import numpy as np
from scipy.spatial.distance import pdist

from .core import GroupInfection, HomogeneousInfection, KernelInfection, RateModel
from .errors import ConfigError


class PairRates(Protocol):
    """β_k· for an infector k over the whole population."""

    size: int

    def row(self, k: int) -> np.ndarray: ...


class HomogeneousRates:
    def __init__(self, beta: float, size: int):
        self.size = size
        self._row = np.full(size, beta / size)

    def row(self, k: int) -> np.ndarray:
        return self._row


class GroupRates:
    """β_{g(j)}/N: the rate depends on the susceptible's infection group only."""

    def __init__(self, rates: Dict[str, float], groups, size: int):
        self.size = size
        self._row = np.array([rates[g] for g in groups], dtype=float) / size

    def row(self, k: int) -> np.ndarray:
        return self._row


class KernelRates:
    """β₀/N · h(x_k, x_j); rows are computed on first use and cached."""

    def __init__(self, beta0: float, kernel, locations: np.ndarray):
        self.size = len(locations)
        self._scale = beta0 / self.size
        self._kernel = kernel
        self._locations = np.asarray(locations, dtype=float)
        self._cache: Dict[int, np.ndarray] = {}

    def row(self, k: int) -> np.ndarray:
        cached = self._cache.get(k)
        if cached is None:
            cached = self._scale * self._kernel.matrix(self._locations[k : k + 1], self._locations)[0]
            self._cache[k] = cached
        return cached


def build_pair_rates(model: RateModel) -> PairRates:
    """Provider matching the model's infection structure."""
    infection = model.infection
    N = model.population_size
    if isinstance(infection, HomogeneousInfection):
        return HomogeneousRates(infection.beta, N)
    if isinstance(infection, GroupInfection):
        return GroupRates(infection.rates, model.population.infection_groups, N)
    if isinstance(infection, KernelInfection):
        if infection.kernel.kind == "constant" and (
            model.population is None or model.population.locations is None
        ):
            return HomogeneousRates(infection.beta0, N)
        return KernelRates(infection.beta0, infection.kernel, model.population.location_array())
    raise ConfigError(f"unsupported infection structure {type(infection).__name__}")


def checked_row(rates: PairRates, k: int, size: int) -> np.ndarray:
    row = np.asarray(rates.row(k), dtype=float)
    if row.shape != (size,) or not np.all(np.isfinite(row)) or np.any(row < 0):
        raise ConfigError(f"pair-rate provider returned an invalid row for infector {k}")
    return row


def uniform_locations(size: int, rng: np.random.Generator, side: float = 100.0) -> np.ndarray:
    return rng.uniform(0.0, side, size=(size, 2))


def scale_locations(locations: np.ndarray, target_mean: float = 0.9) -> np.ndarray:
    """Rescales coordinates so the mean pairwise Euclidean distance is ``target_mean``."""
    locations = np.asarray(locations, dtype=float)
    mean = float(pdist(locations).mean()) if len(locations) > 1 else 0.0
    if mean <= 0:
        raise ConfigError("locations must not all coincide")
    return locations * (target_mean / mean)


def population_locations(size: int, rng: np.random.Generator, target_mean: Optional[float] = 0.9):
    locations = uniform_locations(size, rng)
    return locations if target_mean is None else scale_locations(locations, target_mean)
