"""
Export manager module for puprior.

This module handles writing estimate results and experiment reports as JSON,
curves and histograms as CSV, output file naming, and loading reports back
with schema validation and an aggregate self-consistency check.
"""

import json
import logging
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import jsonschema
import numpy as np
import pandas as pd

from modules.errors import DataParseError
from schemas.result_schema import SCHEMA_VERSION, get_schema

LOG = logging.getLogger(__name__)

# Relative tolerance when re-checking stored aggregates
AGGREGATE_RTOL = 1e-9


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write text through a temporary file in the same directory, then rename.

    Args:
        path: Destination path
        text: Full file content

    Returns:
        Path: Destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as tmp:
            tmp.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays to builtins and non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload: Dict) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate_payload(payload: Dict, kind: str = "estimate") -> Tuple[bool, str]:
    """
    Validate a result or report dictionary against its JSON Schema.

    Args:
        payload: Dictionary to validate
        kind: "estimate" or "report"

    Returns:
        Tuple[bool, str]: (is_valid, error_message)
    """
    try:
        jsonschema.validate(instance=to_jsonable(payload), schema=get_schema(kind))
    except jsonschema.ValidationError as e:
        location = "/".join(str(p) for p in e.absolute_path) or "<root>"
        return False, f"{location}: {e.message}"
    return True, ""


def write_json(path: Union[str, Path], payload: Dict, kind: Optional[str] = None) -> Path:
    """
    Validate (when `kind` is given) and atomically write a JSON document.

    Raises:
        DataParseError: If the payload does not match its schema
    """
    if kind is not None:
        is_valid, message = validate_payload(payload, kind)
        if not is_valid:
            raise DataParseError(f"Refusing to write invalid {kind} file: {message}")
    written = atomic_write_text(path, dumps(payload))
    LOG.info("Wrote %s", written)
    return written


def write_frame_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.10g"))


def curve_frame(curve) -> pd.DataFrame:
    """Criterion curve as a two-column (theta, value) table."""
    return pd.DataFrame(
        [(float(t), float(v)) for t, v in curve],
        columns=["theta", "value"]
    )


def build_estimate_result(
    estimate,
    n: int,
    n_prime: int,
    wall_ms: float,
    omit_timing: bool = False
) -> Dict:
    """
    Assemble the JSON result of a single `estimate` run.

    Args:
        estimate: PriorEstimate
        n: Positive sample size
        n_prime: Unlabeled sample size
        wall_ms: Wall-clock duration in milliseconds
        omit_timing: Write 0 instead of the measured duration

    Returns:
        dict: Result conforming to the estimate schema
    """
    result = estimate.to_dict()
    result.update({
        "n": int(n),
        "n_prime": int(n_prime),
        "wall_ms": 0.0 if omit_timing else round(float(wall_ms), 3),
        "schema_version": SCHEMA_VERSION
    })
    return result


def get_filename(base_name: str, format: str, metadata: Optional[Dict] = None) -> str:
    """
    Generate a deterministic filename for an output file.

    Args:
        base_name: Base filename (e.g., "synth_report")
        format: File extension (json, csv)
        metadata: Optional metadata; "method" and "seed" are appended when present

    Returns:
        str: Generated filename
    """
    base_name = re.sub(r'[^a-zA-Z0-9_-]', '_', base_name)
    parts = [base_name]
    if metadata:
        if metadata.get('method'):
            parts.append(re.sub(r'[^a-zA-Z0-9_-]', '_', str(metadata['method'])))
        if metadata.get('seed') is not None:
            parts.append(f"seed{metadata['seed']}")
    return f"{'_'.join(parts)}.{format}"


def load_report(path: Union[str, Path]) -> Dict:
    """
    Load an experiment report, validate it and recompute its aggregates.

    Args:
        path: Report JSON path

    Returns:
        dict: Parsed report

    Raises:
        DataParseError: If the file is unreadable, invalid, or its aggregates
            disagree with its records
    """
    from modules.experiments import summarize_trials

    path = Path(path)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataParseError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise DataParseError(f"{path} is not valid JSON: {e}", row=e.lineno)

    is_valid, message = validate_payload(report, "report")
    if not is_valid:
        raise DataParseError(f"{path} is not a valid report: {message}")

    true_prior = report.get("config", {}).get("true_prior")
    recomputed = to_jsonable(summarize_trials(report["records"], true_prior))
    for key, stored in report["aggregates"].items():
        if key not in recomputed:
            continue
        fresh = recomputed[key]
        if stored is None or fresh is None:
            consistent = stored is None and fresh is None
        else:
            consistent = math.isclose(stored, fresh, rel_tol=AGGREGATE_RTOL, abs_tol=1e-12)
        if not consistent:
            raise DataParseError(f"{path}: aggregate '{key}' is {stored}, records give {fresh}")

    return report
