import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from ..diagnostics import EnergyTrace
from ..fields import PhysGrid

FIELD_COLUMNS = ("t", "x", "theta", "theta_t", "theta_x", "u", "J")
ENERGY_COLUMNS = ("t", "E", "B0", "Bpi", "D", "residual")


def format_float(value: float) -> str:
    """17 significant digits, '.' decimal"""
    return format(float(value), ".17g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_fields_csv(path: Path, grid: PhysGrid) -> Path:
    """One row per (t, x) node, t-major"""
    def rows():
        for b, t in enumerate(grid.t):
            for i, x in enumerate(grid.x):
                yield (float(t), float(x), float(grid.theta[b, i]), float(grid.theta_t[b, i]),
                       float(grid.theta_x[b, i]), float(grid.u[b, i]), float(grid.J[b, i]))

    return _write_rows(path, FIELD_COLUMNS, rows())


def write_energy_csv(path: Path, trace: EnergyTrace) -> Path:
    rows = zip(trace.times, trace.E, trace.B0, trace.Bpi, trace.D, trace.residual)
    return _write_rows(path, ENERGY_COLUMNS, ([float(v) for v in row] for row in rows))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_summary_json(path: Path, summary: Dict[str, Any]) -> Path:
    """Sorted keys, two-space indent, non-finite floats as null"""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(summary), handle, sort_keys=True, indent=2)
        handle.write("\n")
    return path


def write_index_csv(path: Path, rows: List[Dict[str, Any]], columns: Sequence[str]) -> Path:
    """Sweep index with one row per registered run"""
    return _write_rows(path, columns, ([row.get(c, "") for c in columns] for row in rows))
