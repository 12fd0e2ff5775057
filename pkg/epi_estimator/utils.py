import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from .config import FLOAT_DIGITS, SCHEMA_VERSION
from .core import CaseRecord, Population
from .errors import DataError

CASE_COLUMNS = [
    "case_id",
    "exposure_time",
    "infection_time",
    "removal_time",
    "infection_group",
    "removal_group",
    "x",
    "y",
]
TIME_COLUMNS = ["exposure_time", "infection_time", "removal_time"]
FLOAT_FORMAT = f"%.{FLOAT_DIGITS}g"


def read_case_frame(path: str) -> pd.DataFrame:
    """
    Reads a CaseTable CSV without validating the rows.

    Empty fields and the literal ``NA`` are missing. Unknown columns are kept;
    absent optional columns are added as missing.
    """
    try:
        frame = pd.read_csv(
            path,
            na_values=["NA", ""],
            keep_default_na=False,
            dtype={"infection_group": str, "removal_group": str},
            encoding="utf-8",
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read case table {path}: {exc}") from exc
    if "case_id" not in frame.columns:
        raise DataError(f"case table {path} has no case_id column")
    for col in CASE_COLUMNS:
        if col not in frame.columns:
            frame[col] = np.nan
    for col in TIME_COLUMNS + ["x", "y"]:
        try:
            frame[col] = frame[col].astype(float)
        except ValueError as exc:
            raise DataError(f"column {col} must be numeric: {exc}") from exc
    return frame


def _optional(value: Any) -> Optional[Any]:
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def records_from_frame(frame: pd.DataFrame) -> List[CaseRecord]:
    """Validated CaseRecords, one per row."""
    records = []
    for row in frame.to_dict(orient="records"):
        x, y = _optional(row.get("x")), _optional(row.get("y"))
        try:
            records.append(
                CaseRecord(
                    id=int(row["case_id"]),
                    exposure_time=_optional(row.get("exposure_time")),
                    infection_time=_optional(row.get("infection_time")),
                    removal_time=_optional(row.get("removal_time")),
                    infection_group=_optional(row.get("infection_group")),
                    removal_group=_optional(row.get("removal_group")),
                    location=None if x is None or y is None else (float(x), float(y)),
                )
            )
        except (ValidationError, ValueError, TypeError) as exc:
            raise DataError(f"invalid case row {row.get('case_id')}: {exc}") from exc
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate case ids in case table")
    return records


def read_case_table(path: str) -> List[CaseRecord]:
    return records_from_frame(read_case_frame(path))


def frame_from_records(records: Sequence[CaseRecord]) -> pd.DataFrame:
    rows = []
    for case in records:
        loc = case.location or (None, None)
        rows.append(
            {
                "case_id": case.id,
                "exposure_time": case.exposure_time,
                "infection_time": case.infection_time,
                "removal_time": case.removal_time,
                "infection_group": case.infection_group,
                "removal_group": case.removal_group,
                "x": loc[0] if len(loc) > 0 else None,
                "y": loc[1] if len(loc) > 1 else None,
            }
        )
    return pd.DataFrame(rows, columns=CASE_COLUMNS)


def write_case_table(records: Sequence[CaseRecord], path: Optional[str] = None) -> str:
    """Writes a CaseTable (``NA`` for missing, 12 significant digits) and returns the text."""
    text = frame_from_records(records).to_csv(index=False, na_rep="NA", float_format=FLOAT_FORMAT)
    if path:
        save_report(text, path)
    return text


def read_population(path: str) -> Population:
    """
    Population features CSV: an ``id`` column covering 0..N−1 and any of
    ``infection_group``, ``removal_group``, ``x``, ``y``.
    """
    try:
        frame = pd.read_csv(
            path, dtype={"infection_group": str, "removal_group": str}, keep_default_na=False, na_values=["NA", ""]
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read population {path}: {exc}") from exc
    if "id" not in frame.columns:
        raise DataError("population file needs an id column")
    frame = frame.sort_values("id")
    if list(frame["id"]) != list(range(len(frame))):
        raise DataError("population ids must be 0..N−1")

    def column(name: str):
        if name not in frame.columns:
            return None
        if frame[name].isna().any():
            raise DataError(f"population column {name} has missing values")
        return tuple(str(v) for v in frame[name])

    locations = None
    if {"x", "y"} <= set(frame.columns):
        coords = frame[["x", "y"]].to_numpy(dtype=float)
        if np.isnan(coords).any():
            raise DataError("population locations have missing values")
        locations = tuple(tuple(float(v) for v in row) for row in coords)
    try:
        return Population(
            size=len(frame),
            infection_groups=column("infection_group"),
            removal_groups=column("removal_group"),
            locations=locations,
        )
    except ValidationError as exc:
        raise DataError(f"invalid population file: {exc.errors()[0]['msg']}") from exc


def write_population(population: Population, path: str):
    """Writes the population features in the layout read_population expects."""
    frame = pd.DataFrame({"id": range(population.size)})
    if population.infection_groups is not None:
        frame["infection_group"] = list(population.infection_groups)
    if population.removal_groups is not None:
        frame["removal_group"] = list(population.removal_groups)
    if population.locations is not None:
        coords = population.location_array()
        frame["x"] = coords[:, 0]
        frame["y"] = coords[:, 1]
    save_report(frame.to_csv(index=False, float_format=FLOAT_FORMAT), path)


def round_floats(value: Any) -> Any:
    """Rounds every float to FLOAT_DIGITS significant digits; NaN and ±inf become None."""
    if isinstance(value, BaseModel):
        return round_floats(value.model_dump(mode="python"))
    if isinstance(value, dict):
        return {str(k): round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v) for v in value]
    if isinstance(value, np.ndarray):
        return round_floats(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{FLOAT_DIGITS}g}")
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def envelope(kind: str, result: Any, config: Dict[str, Any], seed: Optional[int]) -> Dict[str, Any]:
    """Result JSON carrying schema version, the configuration and the seed."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": seed,
        "config": round_floats(config),
        "result": round_floats(result),
    }


def dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def emit(text: str, path: Optional[str] = None):
    """Writes to ``path`` or, without one, to stdout."""
    if path:
        save_report(text, path)
    else:
        sys.stdout.write(text)


def save_report(content: str, output_path: str):
    """
    Writes a report file, ensuring parent directories exist.
    """
    output_file = Path(output_path)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    with open(output_file, "w", encoding="utf-8", newline="") as f:
        f.write(content)


def tidy_csv(rows: List[Dict[str, Any]]) -> str:
    """Flat rows as CSV with 12 significant digits."""
    return pd.DataFrame(rows).to_csv(index=False, na_rep="NA", float_format=FLOAT_FORMAT)
