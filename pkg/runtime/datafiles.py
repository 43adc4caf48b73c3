"""
Barma Data Files — CSV ingestion, CSV output and the run manifest.

Input files are UTF-8 CSV with a header row, one time step per row in
chronological order.  The first column is the response; any further
columns are covariates.  Output tables are written with 17 significant
digits so every float survives a write/read cycle unchanged.

Each output directory gets a ``manifest.json`` recording the tool, the
command, its arguments, the seed and the fully resolved configuration.
It carries no timestamps: rerunning a manifest reproduces every output
byte for byte.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError

from core.errors import DataFileError
from core.model import CovariateMatrix, ObservationSeries

logger = logging.getLogger("barma.datafiles")

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
TOOL_NAME = "barma"

PathLike = Union[str, Path]

_LINE_RE = re.compile(r"line (\d+)")


# ---------------------------------------------------------------------------
# Input
# ---------------------------------------------------------------------------

def _read_table(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise DataFileError(f"input file not found: {path}")
    try:
        return pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except UnicodeDecodeError as exc:
        raise DataFileError(f"{path} is not valid UTF-8: {exc}") from exc
    except pd.errors.EmptyDataError:
        raise DataFileError(f"{path} is empty", line=1) from None
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        line = int(match.group(1)) if match else None
        where = f" at line {line}" if line else ""
        raise DataFileError(f"cannot parse {path}{where}: {exc}", line=line) from exc


def _numeric(frame: pd.DataFrame, path: Path) -> np.ndarray:
    values = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = values.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        line = int(row) + 2  # header is line 1
        raise DataFileError(
            f"{path} line {line}: column {frame.columns[col]!r} holds "
            f"{frame.iat[row, col]!r}, expected a number",
            line=line,
        )
    return values.to_numpy(dtype=float)


def load_series(path: PathLike) -> Tuple[ObservationSeries, CovariateMatrix]:
    """Response series and covariates from a CSV file."""
    path = Path(path)
    frame = _read_table(path)
    if frame.shape[1] == 0 or frame.shape[0] == 0:
        raise DataFileError(f"{path} has no data rows", line=2)
    data = _numeric(frame, path)
    y = data[:, 0]
    outside = np.flatnonzero(~((y > 0.0) & (y < 1.0)))
    if outside.size:
        rows = [int(i) + 1 for i in outside]
        listed = ", ".join(str(r) for r in rows[:20]) + (" ..." if len(rows) > 20 else "")
        raise DataFileError(
            f"{path}: response {frame.columns[0]!r} must lie strictly inside (0,1); "
            f"offending row(s): {listed}",
            rows=rows,
        )
    covariates = CovariateMatrix(data[:, 1:])
    logger.info("Loaded %d observation(s) and %d covariate(s) from %s", y.size, covariates.r, path)
    return ObservationSeries(y), covariates


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a table as CSV with round-trip float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def write_series(series: ObservationSeries, path: PathLike, covariates: Optional[CovariateMatrix] = None) -> Path:
    """Series (and covariates) in the layout ``load_series`` reads."""
    frame = pd.DataFrame({"y": series.values})
    if covariates is not None:
        for k in range(covariates.r):
            frame[f"x{k + 1}"] = covariates.values[:, k]
    return write_frame(frame, path)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

class RunManifest(BaseModel):
    """What produced an output directory, enough to produce it again."""
    tool: str = TOOL_NAME
    version: str
    command: str
    seed: int
    arguments: Dict[str, Any] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)


def write_manifest(manifest: RunManifest, directory: PathLike) -> Path:
    path = Path(directory) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = manifest.model_dump(mode="json")
    payload["outputs"] = sorted(payload["outputs"])
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path: PathLike) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFileError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFileError(f"manifest {path} is not valid JSON at line {exc.lineno}", line=exc.lineno) from exc
    try:
        manifest = RunManifest.model_validate(raw)
    except PydanticValidationError as exc:
        raise DataFileError(f"manifest {path} is malformed: {exc}") from exc
    if manifest.tool != TOOL_NAME:
        raise DataFileError(f"manifest {path} was written by {manifest.tool!r}, not {TOOL_NAME!r}")
    return manifest
