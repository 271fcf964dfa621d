"""Deterministic CSV, manifest and plot-script output.

Floats are written with 17 significant digits so that every CSV reloads
to the exact values that were written.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import scipy

import nccscatter
from nccscatter.lib.errors import ConfigError, ScatterError

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(int(value.value)) if isinstance(value.value, int) else str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(value)


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a header line and rows; returns the path written."""
    path = Path(path)
    ensure_dir(path.parent)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"wrote {count} rows to {path}")
    return path


def read_csv(path: str | Path, required: Sequence[str] = ()) -> list[dict[str, str]]:
    """Read a CSV written by :func:`write_csv`.

    Raises:
        ConfigError: If the file is missing or lacks a required column.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("input artifact not found", path=str(path))
    with path.open("r", encoding="utf-8", newline="") as fp:
        reader = csv.DictReader(fp)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"missing column(s) {', '.join(missing)}", path=str(path), line=1)
        return [dict(row) for row in reader]


def parse_float(text: str) -> float:
    s = str(text).strip()
    if s == "":
        return math.nan
    return float(s)


def versions() -> dict[str, str]:
    return {
        "nccscatter": nccscatter.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.name
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, Path):
        return str(value)
    return value


def write_manifest(
    out_dir: str | Path,
    command: str,
    effective: dict,
    derived: Sequence[str],
    artifacts: Sequence[str | Path],
    audit: Optional[dict] = None,
    summary: Optional[dict] = None,
    wall_time: Optional[float] = None,
    seed: Optional[int] = None,
) -> Path:
    """Write ``manifest.json`` describing one run."""
    manifest = {
        "command": command,
        "config": effective,
        "derived": list(derived),
        "seed": seed,
        "artifacts": [Path(a).name for a in artifacts],
        "audit": audit or {},
        "summary": summary or {},
        "versions": versions(),
        "wall_time_s": wall_time,
    }
    path = ensure_dir(out_dir) / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True), encoding="utf-8")
    return path


def write_error_record(out_dir: str | Path, command: str, exc: ScatterError) -> Optional[Path]:
    """Write ``error.json`` for a failed run; returns None if the directory is unusable."""
    record = {"command": command, **exc.record()}
    try:
        path = ensure_dir(out_dir) / "error.json"
        path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        logger.warning(f"could not write error record to {out_dir}: {e}")
        return None
    return path


def write_plot_script(csv_path: str | Path, x: str, y: str, title: str = "", style: str = "lines", color: Optional[str] = None) -> Path:
    """gnuplot script plotting column ``y`` against ``x`` of ``csv_path``.

    With ``color`` the plot is a point map coloured by that column.
    """
    csv_path = Path(csv_path)
    gp = csv_path.with_suffix(".gp")
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title or csv_path.stem}'",
        f"set xlabel '{x}'",
        f"set ylabel '{y}'",
    ]
    if color:
        lines.append("set palette defined (0 'black', 1 'white', 2 'red')")
        lines.append(f"plot '{csv_path.name}' using '{x}':'{y}':'{color}' with points pt 5 ps 0.5 palette notitle")
    else:
        lines.append(f"plot '{csv_path.name}' using '{x}':'{y}' with {style}")
    gp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return gp
