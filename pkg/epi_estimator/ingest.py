"""
Preparing case data: missingness injection, daily-data dequantization and the
reporting-offset conventions for symptom-based records.
"""

from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tenacity import Retrying, retry_if_result, stop_after_attempt

from .config import DEQUANTIZE_MAX_TRIES
from .core import CaseRecord
from .errors import DataError
from .logger import logger
from .streams import SeedLike, make_rng

MissingnessMode = Literal["binomial", "mirror"]


class MaskReport(BaseModel):
    """Which cases lost which endpoint."""

    model_config = ConfigDict(frozen=True)

    n: int
    missing_infection: List[int] = Field(default_factory=list)
    missing_removal: List[int] = Field(default_factory=list)

    @property
    def n_missing(self) -> int:
        return len(self.missing_infection) + len(self.missing_removal)

    @property
    def n_complete(self) -> int:
        return self.n - self.n_missing


def observed_pattern(data: Sequence[CaseRecord]) -> MaskReport:
    """Mask report describing which endpoints are already missing in ``data``."""
    return MaskReport(
        n=len(data),
        missing_infection=[c.id for c in data if c.infection_time is None],
        missing_removal=[c.id for c in data if c.removal_time is None],
    )


def inject_missingness(
    data: Sequence[CaseRecord],
    p_missing: float,
    p_inf_missing: float,
    seed: SeedLike,
    mode: MissingnessMode = "binomial",
    counts: Optional[Tuple[int, int]] = None,
) -> Tuple[List[CaseRecord], MaskReport]:
    """
    Removes one endpoint from a random subset of fully observed cases.

    In ``binomial`` mode x₁ ~ Binomial(n, p_missing) cases are masked and
    x₂ ~ Binomial(x₁, p_inf_missing) of them lose the infection time, the rest the
    removal time. In ``mirror`` mode ``counts`` = (lose infection, lose removal)
    fixes both numbers. A case never loses both endpoints.
    """
    if not (0 <= p_missing <= 1 and 0 <= p_inf_missing <= 1):
        raise DataError("missingness probabilities must lie in [0, 1]")
    if any(not c.is_complete for c in data):
        raise DataError("missingness is injected into fully observed data only")
    rng = make_rng(seed)
    n = len(data)
    if mode == "mirror":
        if counts is None:
            raise DataError("mirror mode needs the counts to reproduce")
        lose_infection, lose_removal = counts
        if lose_infection + lose_removal > n:
            lose_removal = max(n - lose_infection, 0)
            lose_infection = min(lose_infection, n)
        x1 = lose_infection + lose_removal
        x2 = lose_infection
    else:
        x1 = int(rng.binomial(n, p_missing))
        x2 = int(rng.binomial(x1, p_inf_missing))

    chosen = rng.choice(n, size=x1, replace=False)
    drop_infection = set(int(k) for k in chosen[:x2])
    drop_removal = set(int(k) for k in chosen[x2:])

    masked: List[CaseRecord] = []
    for pos, case in enumerate(data):
        if pos in drop_infection:
            masked.append(case.model_copy(update={"infection_time": None, "exposure_time": None}))
        elif pos in drop_removal:
            masked.append(case.model_copy(update={"removal_time": None}))
        else:
            masked.append(case)
    report = MaskReport(
        n=n,
        missing_infection=sorted(data[k].id for k in drop_infection),
        missing_removal=sorted(data[k].id for k in drop_removal),
    )
    return masked, report


def apply_offsets(
    frame: pd.DataFrame, infection_offset: float = 0.0, removal_offset: float = 0.0
) -> pd.DataFrame:
    """
    Shifts symptom-based dates into infectious-period endpoints, e.g. infection one
    day before prodromes (−1) and removal three days after rash onset (+3).
    """
    shifted = frame.copy()
    shifted["infection_time"] = shifted["infection_time"] + infection_offset
    shifted["removal_time"] = shifted["removal_time"] + removal_offset
    if "exposure_time" in shifted:
        shifted["exposure_time"] = shifted["exposure_time"] + infection_offset
    return shifted


def dequantize(
    infection: np.ndarray,
    removal: np.ndarray,
    sigma: float,
    seed: SeedLike,
    ids: Optional[Sequence[int]] = None,
    max_tries: int = DEQUANTIZE_MAX_TRIES,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Adds Normal(0, σ) noise to every observed time; a case whose noisy removal
    does not follow its noisy infection redraws its noise.

    Raises:
        DataError: a case already has r ≤ i, or no valid draw in ``max_tries``.
    """
    if sigma < 0:
        raise DataError("noise standard deviation must be non-negative")
    infection = np.asarray(infection, dtype=float)
    removal = np.asarray(removal, dtype=float)
    ids = list(range(len(infection))) if ids is None else list(ids)
    both = ~np.isnan(infection) & ~np.isnan(removal)
    degenerate = both & (removal <= infection)
    if degenerate.any():
        bad = [ids[k] for k in np.flatnonzero(degenerate)]
        raise DataError(f"cases {bad} have removal not after infection", case_ids=bad)
    if sigma == 0:
        return infection.copy(), removal.copy()

    rng = make_rng(seed)
    noisy_i = infection + rng.normal(0.0, sigma, size=len(infection))
    noisy_r = removal + rng.normal(0.0, sigma, size=len(removal))
    for k in np.flatnonzero(both & (noisy_r <= noisy_i)):
        noisy_i[k], noisy_r[k] = _redraw(infection[k], removal[k], sigma, rng, ids[k], max_tries)
    return noisy_i, noisy_r


def _redraw(i: float, r: float, sigma: float, rng, case_id: int, max_tries: int):
    def draw() -> Tuple[float, float]:
        return i + rng.normal(0.0, sigma), r + rng.normal(0.0, sigma)

    def give_up(retry_state):
        raise DataError(f"case {case_id}: no valid noise draw in {max_tries} tries", case_id=case_id)

    retrying = Retrying(
        stop=stop_after_attempt(max_tries),
        retry=retry_if_result(lambda pair: not pair[1] > pair[0]),
        retry_error_callback=give_up,
    )
    pair = retrying(draw)
    logger.debug(f"case {case_id}: noise redrawn")
    return pair


def dequantize_frame(frame: pd.DataFrame, sigma: float, seed: SeedLike, delta: Optional[float] = None):
    """Dequantizes a CaseTable frame; exposure times follow infection when δ is given."""
    noisy_i, noisy_r = dequantize(
        frame["infection_time"].to_numpy(),
        frame["removal_time"].to_numpy(),
        sigma,
        seed,
        frame["case_id"].tolist(),
    )
    result = frame.copy()
    result["infection_time"] = noisy_i
    result["removal_time"] = noisy_r
    if delta is not None:
        result["exposure_time"] = noisy_i - delta
    else:
        result["exposure_time"] = frame["exposure_time"] + (noisy_i - frame["infection_time"])
    return result
