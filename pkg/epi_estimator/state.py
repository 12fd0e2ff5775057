import tomllib
from typing import Any, Dict, List, Literal, Optional, TypedDict

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import DEFAULT_SEED, MAX_CONDITIONING_TRIES, MAX_WORKERS, ORACLE_FALLBACK_SAMPLES
from .errors import ConfigError


class StudyConfig(BaseModel):
    """
    One simulation study: a grid of (β, p_missing) cells, each run for
    ``replicates`` outbreaks that reach ``min_epidemic_size`` cases.

    Giving ``r0s`` instead of ``betas`` sets β = R₀·γ for each grid value.

    ``model`` picks the infection structure of the simulated outbreaks:

    * ``homogeneous``: β_kj = β/N.
    * ``group``: two equal susceptible groups "1" and "2"; the grid value is β₁
      and ``beta2`` is fixed. Rows report β̂₁ and β̂₂.
    * ``kernel``: β₀·exp(−kernel_rate·distance)/N on Uniform(0, 100)² locations
      rescaled to ``mean_distance``; the grid value is β₀.

    Group and kernel studies report point estimates only.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    betas: List[float] = Field(default_factory=lambda: [2.0])
    r0s: Optional[List[float]] = None
    gamma: float = Field(default=1.0, gt=0.0)
    m: int = Field(default=1, ge=1)
    delta: float = Field(default=0.0, ge=0.0)
    N: int = Field(default=100, ge=2)
    min_epidemic_size: int = Field(default=20, ge=1)
    p_missing: List[float] = Field(default_factory=lambda: [0.2])
    p_inf_missing: float = Field(default=0.5, ge=0.0, le=1.0)
    replicates: int = Field(default=20, ge=1)
    estimator: Literal["tilde", "bar", "mle"] = "tilde"
    interval: Literal["bootstrap", "mcmc", "none"] = "bootstrap"
    model: Literal["homogeneous", "group", "kernel"] = "homogeneous"
    # group and kernel models
    beta2: float = Field(default=1.0, ge=0.0)
    kernel_rate: float = Field(default=0.05, ge=0.0)
    mean_distance: float = Field(default=0.9, gt=0.0)
    # bootstrap
    b_out: int = Field(default=200, ge=2)
    b_in: int = Field(default=20, ge=2)
    se_reps: int = Field(default=100, ge=2)
    omega: float = Field(default=0.1, gt=0.0, lt=1.0)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    missingness_mode: Literal["binomial", "mirror"] = "binomial"
    # mcmc
    mcmc_iterations: int = Field(default=2000, ge=4)
    mcmc_burn_in: int = Field(default=500, ge=0)
    prior_shape: float = Field(default=1e-3, gt=0.0)
    prior_rate: float = Field(default=1e-3, gt=0.0)
    max_tries: int = Field(default=MAX_CONDITIONING_TRIES, ge=1)
    oracle_samples: Optional[int] = None
    workers: int = Field(default=MAX_WORKERS, ge=1)
    seed: int = DEFAULT_SEED
    output_dir: str = "study-results"

    @model_validator(mode="before")
    @classmethod
    def _oracle_default(cls, data: Any) -> Any:
        # (r_j, i_k) pairs have no closed form beyond m = 1
        if isinstance(data, dict) and data.get("oracle_samples") is None:
            m = data.get("m", 1)
            if isinstance(m, int) and m > 1:
                data = {**data, "oracle_samples": ORACLE_FALLBACK_SAMPLES}
        return data

    @model_validator(mode="after")
    def _grid(self) -> "StudyConfig":
        if not self.grid_betas or not self.p_missing:
            raise ValueError("study grid is empty")
        if any(b <= 0 for b in self.grid_betas):
            raise ValueError("grid rates must be positive")
        if any(not 0.0 <= p <= 1.0 for p in self.p_missing):
            raise ValueError("p_missing values must lie in [0, 1]")
        if self.min_epidemic_size > self.N:
            raise ValueError("min_epidemic_size exceeds N")
        if self.interval == "mcmc" and self.mcmc_burn_in + 4 > self.mcmc_iterations:
            raise ValueError("mcmc_iterations must exceed mcmc_burn_in by at least 4")
        if self.model != "homogeneous" and self.interval != "none":
            raise ValueError(f"{self.model} studies support interval='none' only")
        return self

    @property
    def grid_betas(self) -> List[float]:
        if self.r0s is not None:
            return [r0 * self.gamma for r0 in self.r0s]
        return list(self.betas)

    def cells(self) -> List[Dict[str, Any]]:
        """Grid cells in a fixed order: β outer, p_missing inner."""
        return [
            {"cell": c, "beta": beta, "p_missing": p}
            for c, (beta, p) in enumerate((b, p) for b in self.grid_betas for p in self.p_missing)
        ]


def load_study_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> StudyConfig:
    """
    Reads a flat TOML study file and applies flag overrides (``None`` values are
    ignored).

    Raises:
        ConfigError: unreadable file, unknown keys or invalid values.
    """
    values: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "rb") as f:
                values = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read study config {path}: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return StudyConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"invalid study config ({where}): {first['msg']}") from exc


class StudyState(TypedDict):
    """
    Represents the state of the simulation study workflow.

    Attributes:
        config (StudyConfig): The validated study configuration.
        cells (List[dict]): Grid cells with their β and p_missing.
        records (List[dict]): One row per (cell, replicate), in grid order.
        summary (List[dict]): Coverage, width and bias per cell.
        outputs (List[str]): Paths of the written report files.
    """

    config: StudyConfig
    cells: List[Dict[str, Any]]
    records: List[Dict[str, Any]]
    summary: List[Dict[str, Any]]
    outputs: List[str]
