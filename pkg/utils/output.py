"""
Deterministic writers for data files: CSV with 17 significant digits and
LF line endings, JSON with shortest round-trip floats.
"""
import csv
import json
import math
from pathlib import Path

import numpy as np


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    # -0.0 prints as 0
    return '%.17g' % (float(value) + 0.0)


def to_builtin(obj):
    """numpy scalars and arrays to builtins; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(key): to_builtin(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_builtin(value) for value in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def to_json_text(obj) -> str:
    return json.dumps(to_builtin(obj), indent=2, allow_nan=False) + '\n'


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json_text(obj), encoding='utf-8', newline='\n')
    return path


def write_csv(path, header: list[str], rows) -> Path:
    """Header row then numeric rows, comma separated, LF terminated."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(value) for value in row])
    return path


def read_coefficients(path) -> np.ndarray:
    """Coefficients from a `k,c_k` CSV; indices must run 0..N in order."""
    with Path(path).open(encoding='utf-8', newline='') as handle:
        rows = list(csv.reader(handle))
    if not rows or [cell.strip() for cell in rows[0]] != ['k', 'c_k']:
        raise ValueError(f"{path}: expected header 'k,c_k'")
    coeffs = []
    for index, row in enumerate(rows[1:]):
        if not row:
            continue
        if len(row) != 2 or int(row[0]) != index:
            raise ValueError(f"{path}: row {index + 2} must read '{index},<c_{index}>'")
        coeffs.append(float(row[1]))
    if not coeffs:
        raise ValueError(f"{path}: no coefficients")
    return np.asarray(coeffs, dtype=np.float64)
