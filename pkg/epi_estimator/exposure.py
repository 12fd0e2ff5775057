"""
Conditional expectations of the infective time pressure τ_kj given partially
observed endpoints.

Infectious periods are Erlang(m, γ). A missing removal time is drawn forward
from the observed infection time, a missing infection time backward from the
observed removal time. The susceptible's times are shifted by −δ first, so every
kernel below works with j's exposure time e_j.

Each pattern has one array kernel operating on equally shaped numpy arrays;
``expected_tau`` (one pair) and ``expected_tau_matrix`` (every ordered pair of a
case list) share them.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special, stats

from .config import EQUAL_RATE_TOLERANCE
from .core import CaseArrays, CaseRecord, ObservationPattern, classify_flags
from .errors import ConfigError, DataError, NoClosedFormError
from .logger import logger
from .streams import SeedLike, make_rng


class PairObservation(BaseModel):
    """Observed endpoints of an ordered pair (infector k, susceptible j)."""

    model_config = ConfigDict(frozen=True)

    i_k: Optional[float] = None
    r_k: Optional[float] = None
    i_j: Optional[float] = None
    r_j: Optional[float] = None
    gamma_k: float = Field(gt=0.0)
    gamma_j: float = Field(gt=0.0)
    erlang_shape: int = Field(default=1, ge=1)
    incubation: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _consistent(self) -> "PairObservation":
        if self.i_k is None and self.r_k is None:
            raise ValueError("infector needs an observed endpoint")
        if self.i_j is None and self.r_j is None:
            raise ValueError("susceptible needs an observed endpoint")
        for i, r, who in ((self.i_k, self.r_k, "k"), (self.i_j, self.r_j, "j")):
            if i is not None and r is not None and not r > i:
                raise ValueError(f"case {who}: removal must follow infection")
        return self

    @classmethod
    def from_cases(
        cls,
        k: CaseRecord,
        j: CaseRecord,
        gamma_k: float,
        gamma_j: float,
        erlang_shape: int = 1,
        incubation: float = 0.0,
    ) -> "PairObservation":
        return cls(
            i_k=k.infection_time,
            r_k=k.removal_time,
            i_j=j.infection_time,
            r_j=j.removal_time,
            gamma_k=gamma_k,
            gamma_j=gamma_j,
            erlang_shape=erlang_shape,
            incubation=incubation,
        )

    @property
    def pattern(self) -> ObservationPattern:
        return classify_flags(
            self.i_k is not None, self.r_k is not None, self.i_j is not None, self.r_j is not None
        )


# ----------------- Erlang helpers -----------------


def erlang_cdf(x, gamma, m: int) -> np.ndarray:
    """F_{γ,m}(x); zero for x ≤ 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, stats.gamma.cdf(np.maximum(x, 0.0), a=m, scale=1.0 / np.asarray(gamma)), 0.0)


def erlang_sf(x, gamma, m: int) -> np.ndarray:
    """S_{γ,m}(x) = 1 − F_{γ,m}(x); one for x ≤ 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, stats.gamma.sf(np.maximum(x, 0.0), a=m, scale=1.0 / np.asarray(gamma)), 1.0)


def _poisson_pmf(l: int, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return np.exp(-mu) * mu**l / math.factorial(l)


def _positive_part_mean(c, gamma, m: int) -> np.ndarray:
    """E[(c − Y)^+] for Y ~ Erlang(m, γ)."""
    c = np.asarray(c, dtype=float)
    value = c * erlang_cdf(c, gamma, m) - m / gamma * erlang_cdf(c, gamma, m + 1)
    return np.where(c > 0, value, 0.0)


# ----------------- Pattern kernels -----------------


def tau_i_k_i_j(d, gamma_k, m: int) -> np.ndarray:
    """(i_k, i_j) with d = e_j − i_k: E[min(X, d)], zero when d ≤ 0."""
    d = np.asarray(d, dtype=float)
    value = d * erlang_sf(d, gamma_k, m) + m / gamma_k * erlang_cdf(d, gamma_k, m + 1)
    return np.where(d > 0, value, 0.0)


def tau_r_k_r_j_i_k(u, length, gamma_j, m: int) -> np.ndarray:
    """
    (r_k, r_j, i_k) with u = r_j − i_k and length = r_k − i_k.

    τ = clip(u − Y, 0, length) with Y ~ Erlang(m, γ_j), split as two positive parts.
    """
    u = np.asarray(u, dtype=float)
    return _positive_part_mean(u, gamma_j, m) - _positive_part_mean(u - length, gamma_j, m)


def tau_r_k_i_j(c, gamma_k, m: int) -> np.ndarray:
    """
    (r_k, i_j) with c = r_k − e_j: E[(X − c)^+], or m/γ_k when e_j ≥ r_k.

    Equivalent Poisson form Σ_{l<m} P_{γ_k c}(l)(m − l)/γ_k.
    """
    c = np.asarray(c, dtype=float)
    value = m / gamma_k * erlang_sf(c, gamma_k, m + 1) - c * erlang_sf(c, gamma_k, m)
    return np.where(c > 0, value, m / gamma_k * np.ones_like(c))


def tau_r_k_r_j(diff, gamma_k, gamma_j, m: int) -> np.ndarray:
    """
    (r_k, r_j) with diff = r_k − r_j, both infection times Erlang backward draws.

    Uses c = γ_k/(γ_k + γ_j) and Poisson weights P_{γ·d}(l).
    """
    diff = np.asarray(diff, dtype=float)
    gamma_k = np.broadcast_to(np.asarray(gamma_k, dtype=float), diff.shape)
    gamma_j = np.broadcast_to(np.asarray(gamma_j, dtype=float), diff.shape)
    c = gamma_k / (gamma_k + gamma_j)
    d = np.abs(diff)
    before = diff > 0  # r_j < r_k

    early = np.zeros_like(diff)
    for l1 in range(m):
        weight = _poisson_pmf(l1, gamma_k * d)
        inner = np.zeros_like(diff)
        for l2 in range(m - l1):
            inner += special.comb(m + l2 - 1, l2) * c**l2 * (1 - c) ** m * (m - l1 - l2)
        early += weight * inner
    early /= gamma_k

    late = np.zeros_like(diff)
    for l1 in range(m):
        weight = _poisson_pmf(l1, gamma_j * d)
        inner = np.zeros_like(diff)
        for l2 in range(m):
            inner += special.comb(m - l1 - 1 + l2, l2) * c**l2 * (1 - c) ** (m - l1) * (m - l2)
        late += weight * inner
    late = late / gamma_k + erlang_cdf(d, gamma_j, m) * m / gamma_k

    return np.where(before, early, late)


def _h1(c, D) -> np.ndarray:
    """∫_0^D e^{−c x} dx for c ≥ 0."""
    safe = np.where(c > 0, c, 1.0)
    return np.where(c > 0, -np.expm1(-safe * D) / safe, D)


def _h2(c, D) -> np.ndarray:
    """∫_0^D x e^{−c x} dx for c ≥ 0, series near cD = 0."""
    x = c * D
    series = D**2 * (0.5 - x / 3.0 + x**2 / 8.0 - x**3 / 30.0)
    safe = np.where(c > 0, c, 1.0)
    closed = (1.0 - np.exp(-x) * (1.0 + x)) / safe**2
    return np.where(x < 1e-3, series, closed)


def _rate_gap(gamma_k, gamma_j) -> np.ndarray:
    gap = gamma_j - gamma_k
    scale = np.maximum(gamma_k, gamma_j)
    return np.where(np.abs(gap) < EQUAL_RATE_TOLERANCE * scale, 0.0, gap)


def _exp_moments(c, lo, hi) -> Tuple[np.ndarray, np.ndarray]:
    """(∫_lo^hi e^{c x} dx, ∫_lo^hi x e^{c x} dx) for any real c, series near cL = 0."""
    L = hi - lo
    z = c * L
    safe = np.where(c != 0, c, 1.0)
    start = np.exp(c * lo)
    zeroth = np.where(c != 0, np.expm1(z) / safe, L)
    first = np.where(
        np.abs(z) < 1e-3,
        L**2 * (0.5 + z / 3.0 + z**2 / 8.0 + z**3 / 30.0),
        (np.exp(z) * (z - 1.0) + 1.0) / safe**2,
    )
    return start * zeroth, start * (lo * zeroth + first)


def _closed_linear_moment(a, lo, hi) -> np.ndarray:
    """∫_lo^hi x e^{a x} dx as a⁻²[(1 − a x)e^{a x}] from hi to lo; NaN for a = 0."""
    safe = np.where(a != 0, a, np.nan)
    return ((1 - safe * lo) * np.exp(safe * lo) - (1 - safe * hi) * np.exp(safe * hi)) / safe**2


# exponent γ_j·(r_j − i_k) above which the unscaled integrals overflow
HARD_TERMS_EXPONENT_LIMIT = 600.0

HARD_TERMS = (
    "removed_offset",
    "removed_time",
    "removed_offset_gap",
    "removed_time_start",
    "removed_time_end",
    "removed_time_end_constant",
    "removed_time_end_linear",
    "removed_time_end_linear_closed",
    "infectious_after",
    "infectious_within",
    "after_time",
    "after_offset",
    "within_time",
    "within_offset",
    "within_time_gap",
    "within_time_tail",
    "within_time_gap_closed",
    "within_offset_gap",
    "within_offset_tail",
)


def hard_terms(i_k, r_j, gamma_k, gamma_j) -> Dict[str, np.ndarray]:
    """
    Intermediate integrals of E[τ_kj] for (r_j, i_k), m = 1, in absolute times.

    With r_k − i_k ~ Exp(γ_k) and r_j − i_j ~ Exp(γ_j), the joint density of
    (i_j, r_k) is γ_jγ_k·e^{−γ_j r_j}e^{γ_k i_k}·e^{γ_j i_j}e^{−γ_k r_k}. Integrating
    τ against it over i_j ∈ (i_k, r_j) splits into

    * ``removed`` (i_j > r_k, τ = r_k − i_k):
      scale·(removed_time − removed_offset), where removed_time integrates r_k and
      removed_offset integrates i_k over i_k < r_k < i_j;
    * ``infectious`` (r_k > i_j, τ = i_j − i_k):
      infectious_after (r_k > r_j) + infectious_within (i_j < r_k < r_j).

    Each entry is one integral in that chain; ``*_gap`` entries integrate
    e^{(γ_j − γ_k) i_j}, ``*_tail`` entries e^{−γ_k r_j}e^{γ_j i_j}. The two
    ``*_closed`` entries are the antiderivative forms for γ_j ≠ γ_k (NaN otherwise)
    and equal their series-safe counterparts. Terms with an ``offset`` carry the
    factor i_k, so they vanish when times are measured from i_k.

    Returns:
        Mapping from the names in ``HARD_TERMS`` plus ``scale``, ``removed`` and
        ``infectious`` to arrays; only meaningful where r_j > i_k.
    """
    i_k = np.asarray(i_k, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    shape = np.broadcast_shapes(i_k.shape, r_j.shape, np.shape(gamma_k), np.shape(gamma_j))
    i_k, r_j = np.broadcast_to(i_k, shape), np.broadcast_to(r_j, shape)
    gamma_k = np.broadcast_to(np.asarray(gamma_k, dtype=float), shape)
    gamma_j = np.broadcast_to(np.asarray(gamma_j, dtype=float), shape)
    a = _rate_gap(gamma_k, gamma_j)

    gap, linear_gap = _exp_moments(a, i_k, r_j)
    own, linear_own = _exp_moments(gamma_j, i_k, r_j)
    tail_k = np.exp(-gamma_k * r_j)
    start_k = np.exp(-gamma_k * i_k)

    t = {}
    t["removed_offset_gap"] = gap
    t["removed_offset"] = i_k / gamma_k * (start_k * own - t["removed_offset_gap"])
    t["removed_time_start"] = (1 + gamma_k * i_k) * start_k * own
    t["removed_time_end_constant"] = gap
    t["removed_time_end_linear"] = gamma_k * linear_gap
    t["removed_time_end_linear_closed"] = gamma_k * _closed_linear_moment(a, i_k, r_j)
    t["removed_time_end"] = t["removed_time_end_constant"] + t["removed_time_end_linear"]
    t["removed_time"] = (t["removed_time_start"] - t["removed_time_end"]) / gamma_k**2

    t["after_time"] = tail_k * linear_own / gamma_k
    t["after_offset"] = i_k * tail_k * own / gamma_k
    t["within_time_gap"] = linear_gap
    t["within_time_gap_closed"] = _closed_linear_moment(a, i_k, r_j)
    t["within_time_tail"] = tail_k * linear_own
    t["within_time"] = (t["within_time_gap"] - t["within_time_tail"]) / gamma_k
    t["within_offset_gap"] = gap
    t["within_offset_tail"] = tail_k * own
    t["within_offset"] = i_k / gamma_k * (t["within_offset_gap"] - t["within_offset_tail"])

    scale = gamma_j * gamma_k * np.exp(gamma_k * i_k - gamma_j * r_j)
    t["infectious_after"] = scale * (t["after_time"] - t["after_offset"])
    t["infectious_within"] = scale * (t["within_time"] - t["within_offset"])
    t["scale"] = scale
    t["removed"] = scale * (t["removed_time"] - t["removed_offset"])
    t["infectious"] = t["infectious_after"] + t["infectious_within"]
    return t


def _scaled_pieces(D, gamma_k, gamma_j) -> Tuple[np.ndarray, np.ndarray]:
    """The same two pieces with every exponential pre-multiplied by the density scale."""
    a = _rate_gap(gamma_k, gamma_j)
    up = a >= 0
    h1 = _h1(np.abs(a), D)
    h2 = _h2(np.abs(a), D)
    decay_k = np.exp(-gamma_k * D)
    decay_j = np.exp(-gamma_j * D)
    convolution = np.where(up, decay_k * h1, decay_j * h1)
    total = (-np.expm1(-gamma_j * D) - gamma_j * convolution) / gamma_k
    infectious = np.where(up, gamma_j * decay_k * (D * h1 - h2), gamma_j * decay_j * h2)
    return total - infectious, infectious


def hard_pieces(D, gamma_k, gamma_j) -> Tuple[np.ndarray, np.ndarray]:
    """
    The two additive pieces of E[τ_kj] for (r_j, i_k) with D = r_j − i_k, m = 1.

    In time elapsed since i_k, with X = r_k − i_k ~ Exp(γ_k) and Y = r_j − i_j ~ Exp(γ_j),
    τ = min(X, D − Y) on Y < D. The first piece collects draws where k is removed
    before j is exposed (τ = X), the second where k is still infectious (τ = D − Y).
    Both are expectations over the joint law, so their sum needs no normalization.

    Evaluated through ``hard_terms`` with times measured from i_k; pairs with
    γ_j·D beyond ``HARD_TERMS_EXPONENT_LIMIT`` use the pre-scaled form.

    Returns:
        (removed, infectious) arrays; zero where D ≤ 0.
    """
    D = np.maximum(np.asarray(D, dtype=float), 0.0)
    gamma_k = np.broadcast_to(np.asarray(gamma_k, dtype=float), D.shape)
    gamma_j = np.broadcast_to(np.asarray(gamma_j, dtype=float), D.shape)
    far = gamma_j * D > HARD_TERMS_EXPONENT_LIMIT
    near_D = np.where(far, 0.0, D)
    terms = hard_terms(np.zeros_like(D), near_D, gamma_k, gamma_j)
    far_removed, far_infectious = _scaled_pieces(D, gamma_k, gamma_j)
    removed = np.where(far, far_removed, terms["removed"])
    infectious = np.where(far, far_infectious, terms["infectious"])
    zero = D <= 0
    return np.where(zero, 0.0, removed), np.where(zero, 0.0, infectious)


def tau_r_j_i_k(D, gamma_k, gamma_j, m: int) -> np.ndarray:
    """(r_j, i_k) with D = r_j − i_k; closed form for m = 1 only."""
    if m != 1:
        raise NoClosedFormError(ObservationPattern.R_J_I_K.value, m)
    removed, infectious = hard_pieces(D, gamma_k, gamma_j)
    return removed + infectious


# ----------------- Operations -----------------


def _shifted(p: PairObservation) -> Tuple[Optional[float], Optional[float]]:
    shift = p.incubation
    e_j = None if p.i_j is None else p.i_j - shift
    r_j = None if p.r_j is None else p.r_j - shift
    return e_j, r_j


def expected_tau(p: PairObservation) -> float:
    """
    E[τ_kj | observed endpoints] under Erlang(m, γ) infectious periods.

    Raises:
        NoClosedFormError: for (r_j, i_k) with m > 1.
    """
    pattern = p.pattern.canonical
    m = p.erlang_shape
    e_j, r_j = _shifted(p)
    if pattern is ObservationPattern.COMPLETE:
        return float(min(p.r_k, e_j) - min(e_j, p.i_k))
    if pattern is ObservationPattern.I_K_I_J:
        return float(tau_i_k_i_j(e_j - p.i_k, p.gamma_k, m))
    if pattern is ObservationPattern.R_K_R_J_I_K:
        return float(tau_r_k_r_j_i_k(r_j - p.i_k, p.r_k - p.i_k, p.gamma_j, m))
    if pattern is ObservationPattern.R_K_I_J:
        return float(tau_r_k_i_j(p.r_k - e_j, p.gamma_k, m))
    if pattern is ObservationPattern.R_K_R_J:
        return float(tau_r_k_r_j(p.r_k - r_j, p.gamma_k, p.gamma_j, m))
    return float(tau_r_j_i_k(r_j - p.i_k, p.gamma_k, p.gamma_j, m))


def expected_duration(case: CaseRecord, gamma: float, m: int = 1) -> float:
    """Observed r − i, otherwise the Erlang mean m/γ."""
    if case.infection_time is None and case.removal_time is None:
        raise DataError(f"case {case.id} has no observed endpoint", case_id=case.id)
    if case.is_complete:
        return case.duration
    return m / gamma


def expected_durations(arrays: CaseArrays, gamma: np.ndarray, m: int = 1) -> np.ndarray:
    observed = arrays.removal - arrays.infection
    return np.where(arrays.complete, observed, m / np.asarray(gamma, dtype=float))


def mc_tau_oracle(p: PairObservation, samples: int, rng_seed: SeedLike) -> Tuple[float, float]:
    """
    Monte Carlo E[τ_kj]: draws missing endpoints from their conditional laws and
    averages the exact τ.

    Returns:
        (mean, standard error).
    """
    if samples < 1000:
        raise ConfigError("mc_tau_oracle needs at least 1000 samples", samples=samples)
    e_j, r_j = _shifted(p)
    if p.i_k is not None and p.r_k is not None and e_j is not None:
        return min(p.r_k, e_j) - min(e_j, p.i_k), 0.0

    rng = make_rng(rng_seed)
    m = p.erlang_shape
    draws_k = rng.gamma(m, 1.0 / p.gamma_k, size=samples)
    draws_j = rng.gamma(m, 1.0 / p.gamma_j, size=samples)
    i_k = np.full(samples, p.i_k) if p.i_k is not None else p.r_k - draws_k
    r_k = np.full(samples, p.r_k) if p.r_k is not None else p.i_k + draws_k
    e = np.full(samples, e_j) if e_j is not None else r_j - draws_j

    tau = np.minimum(r_k, e) - np.minimum(e, i_k)
    return float(tau.mean()), float(tau.std(ddof=1) / math.sqrt(samples))


def expected_tau_matrix(
    arrays: CaseArrays,
    gamma: np.ndarray,
    m: int = 1,
    delta: float = 0.0,
    oracle_samples: Optional[int] = None,
    rng_seed: Optional[SeedLike] = None,
) -> np.ndarray:
    """
    E[τ_kj] for every ordered pair of cases (row infector, column susceptible).

    Args:
        arrays: Case columns with NaN for missing endpoints.
        gamma: Removal rate of each case.
        m: Erlang shape.
        delta: Fixed incubation period.
        oracle_samples: Monte Carlo samples for pairs without a closed form;
            ``None`` raises NoClosedFormError instead.
        rng_seed: Seed for the Monte Carlo fallback.

    Returns:
        n×n matrix with a zero diagonal.
    """
    n = arrays.n
    gamma = np.asarray(gamma, dtype=float)
    i, r = arrays.infection, arrays.removal
    e = i - delta
    rj = r - delta
    has_i = ~np.isnan(i)
    has_r = ~np.isnan(r)

    k_both = (has_i & has_r)[:, None]
    k_inf = (has_i & ~has_r)[:, None]
    k_rem = (~has_i & has_r)[:, None]
    j_inf = has_i[None, :]
    off = ~np.eye(n, dtype=bool)

    ones = np.ones((n, n))
    I_k, R_k = i[:, None] * ones, r[:, None] * ones
    E_j, R_j = e[None, :] * ones, rj[None, :] * ones
    G_k, G_j = gamma[:, None] * ones, gamma[None, :] * ones

    out = np.zeros((n, n))
    with np.errstate(invalid="ignore"):
        mask = k_both & j_inf & off
        out[mask] = np.minimum(R_k[mask], E_j[mask]) - np.minimum(E_j[mask], I_k[mask])

        mask = k_both & ~j_inf & off
        out[mask] = tau_r_k_r_j_i_k(R_j[mask] - I_k[mask], R_k[mask] - I_k[mask], G_j[mask], m)

        mask = k_inf & j_inf & off
        out[mask] = tau_i_k_i_j(E_j[mask] - I_k[mask], G_k[mask], m)

        mask = k_rem & j_inf & off
        out[mask] = tau_r_k_i_j(R_k[mask] - E_j[mask], G_k[mask], m)

        mask = k_rem & ~j_inf & off
        out[mask] = tau_r_k_r_j(R_k[mask] - R_j[mask], G_k[mask], G_j[mask], m)

        mask = k_inf & ~j_inf & off
        if mask.any():
            if m == 1:
                out[mask] = tau_r_j_i_k(R_j[mask] - I_k[mask], G_k[mask], G_j[mask], m)
            elif oracle_samples is None:
                raise NoClosedFormError(ObservationPattern.R_J_I_K.value, m)
            else:
                out[mask] = _oracle_fill(arrays, gamma, m, delta, mask, oracle_samples, rng_seed)
    return out


def _oracle_fill(
    arrays: CaseArrays,
    gamma: np.ndarray,
    m: int,
    delta: float,
    mask: np.ndarray,
    samples: int,
    rng_seed: Optional[SeedLike],
) -> np.ndarray:
    rng = make_rng(0 if rng_seed is None else rng_seed)
    rows, cols = np.nonzero(mask)
    logger.debug(f"Monte Carlo fallback for {len(rows)} (r_j, i_k) pairs, m={m}")
    values = np.empty(len(rows))
    for idx, (k, j) in enumerate(zip(rows, cols)):
        pair = PairObservation(
            i_k=float(arrays.infection[k]),
            r_j=float(arrays.removal[j]),
            gamma_k=float(gamma[k]),
            gamma_j=float(gamma[j]),
            erlang_shape=m,
            incubation=delta,
        )
        values[idx], _ = mc_tau_oracle(pair, samples, rng)
    return values


def pattern_counts(arrays: CaseArrays) -> Dict[str, int]:
    """Number of ordered pairs per canonical observation pattern."""
    has_i = ~np.isnan(arrays.infection)
    has_r = ~np.isnan(arrays.removal)
    counts: Dict[str, int] = {}
    for k in range(arrays.n):
        for j in range(arrays.n):
            if k == j:
                continue
            pattern = classify_flags(has_i[k], has_r[k], has_i[j], has_r[j]).canonical
            counts[pattern.value] = counts.get(pattern.value, 0) + 1
    return counts