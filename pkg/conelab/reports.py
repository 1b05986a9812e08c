"""CSV report writers; every file starts with the config hash and a column header."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np

from .fields import Grid, write_grid_dump

_LOGGER = logging.getLogger(__name__)

HASH_PREFIX = "# config_sha256="

MANIFEST_FILE = "manifest.csv"
LEDGER_FILE = "ledger.csv"
BUDGET_FILE = "budget.csv"
NORMS_FILE = "norms.csv"
COMPARISON_FILE = "comparison.csv"
CURVATURE_FILE = "curvature.csv"
CONVERGENCE_FILE = "convergence.csv"
CHECKS_FILE = "checks.csv"
GEODESIC_FILE = "rho.txt"

CHECK_COLUMNS = ("criterion", "passed", "value", "threshold", "detail")


def format_value(value: Any) -> str:
    """Shortest round-trip text for floats; str() for everything else."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(
    path: Path | str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_hash: str,
) -> Path:
    """Write ``rows`` under a hash comment and a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"{HASH_PREFIX}{config_hash}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{path.name}: row has {len(row)} values for {len(columns)} columns")
            writer.writerow([format_value(v) for v in row])
            count += 1
    _LOGGER.info("Wrote %s (%d rows)", path, count)
    return path


def read_csv(path: Path | str) -> tuple:
    """Read a report back as ``(config_hash, columns, rows)`` with rows as strings."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        first = handle.readline().rstrip("\n")
        if not first.startswith(HASH_PREFIX):
            raise ValueError(f"{path} has no config hash line")
        reader = csv.reader(handle)
        columns = next(reader)
        rows: List[List[str]] = [row for row in reader]
    return first[len(HASH_PREFIX):], tuple(columns), rows


def write_geodesic_dump(directory: Path | str, grid: Grid, rho: np.ndarray) -> Path:
    """Distance field in the grid-dump format (masked nodes written as -1)."""
    values = np.where(grid.mask, rho, -1.0)
    return write_grid_dump(Path(directory) / GEODESIC_FILE, grid, values)
