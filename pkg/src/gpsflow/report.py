"""Canonical JSON for run reports: sorted keys, floats rounded to 9
significant digits, no NaN/Inf, trailing newline."""

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SIG_DIGITS = 9


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot serialize non-finite float {x}")
        x = float(f"{x:.{SIG_DIGITS}g}")
        return x + 0.0
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value"):
        return _canon(obj.value)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj):
    return json.dumps(_canon(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_report(command, inputs=None, parameters=None, outputs=None):
    """Assemble a report dict; ``inputs`` maps names to file paths, which are
    replaced by their SHA-256 digests."""
    return {
        "command": command,
        "inputs": {k: file_digest(v) for k, v in sorted((inputs or {}).items())},
        "parameters": parameters or {},
        "outputs": outputs or {},
        "tool_version": __version__,
    }
