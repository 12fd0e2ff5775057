"""
Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI should use and can render
itself as the machine-readable JSON object written to stderr.
"""

from typing import Any, Dict, Optional


class EpiEstimatorError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        payload.update({k: v for k, v in self.details.items() if v is not None})
        return payload


class ConfigError(EpiEstimatorError):
    """Invalid flags, config file or model parameters."""

    exit_code = 2


class DataError(EpiEstimatorError):
    """Input case data violates a CaseRecord invariant or cannot be parsed."""

    exit_code = 3


class IncompletePairError(DataError):
    """An exact τ_kj was requested but a required endpoint is missing."""

    def __init__(self, infector_id: int, susceptible_id: int, missing: str):
        super().__init__(
            f"incomplete pair ({infector_id}, {susceptible_id}): {missing} is missing; "
            "use the exposure module for partially observed pairs",
            infector_id=infector_id,
            susceptible_id=susceptible_id,
            missing=missing,
        )


class NoClosedFormError(EpiEstimatorError):
    """No closed-form E[τ_kj] exists for this observation pattern and shape."""

    exit_code = 5

    def __init__(self, pattern: str, erlang_shape: int):
        super().__init__(
            f"no closed form for pattern {pattern} with Erlang shape m={erlang_shape}; "
            "use mc_tau_oracle",
            pattern=pattern,
            erlang_shape=erlang_shape,
        )
        self.pattern = pattern
        self.erlang_shape = erlang_shape


class ConditioningFailed(EpiEstimatorError):
    """Size-conditioned simulation did not produce an accepted outbreak."""

    exit_code = 4

    def __init__(self, attempts: int, target: Optional[str] = None):
        super().__init__(
            f"conditioning failed after {attempts} attempts"
            + (f" (target {target})" if target else ""),
            attempts=attempts,
            target=target,
        )
        self.attempts = attempts


class EstimationError(EpiEstimatorError):
    """Degenerate estimator input (empty calibration set, zero denominator)."""

    exit_code = 5
