"""CSV and JSON readers/writers for records, FRFs and run manifests.

Floats are written with ``repr`` so that files round-trip exactly and are
byte-identical between runs.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "RECORD_COLUMNS",
    "FRF_COLUMNS",
    "write_record_csv",
    "read_record_csv",
    "write_frf_csv",
    "read_frf_csv",
    "write_rows_csv",
    "write_json",
    "read_json",
    "jsonable",
]

RECORD_COLUMNS = ("sample_index", "time_s", "value")
FRF_COLUMNS = ("bin", "freq_hz", "re", "im", "mag_db", "phase_rad", "variance", "valid_flag")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rows_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_record_csv(path, x, Ts: float) -> Path:
    """Time record as ``sample_index,time_s,value``."""
    x = np.asarray(x, dtype=float)
    n = np.arange(x.size)
    return write_rows_csv(path, RECORD_COLUMNS, zip(n, n * float(Ts), x))


def read_record_csv(path):
    """Read a record written by :func:`write_record_csv` (or any file with those columns).

    Returns
    -------
    x : ndarray
    Ts : float or None
        Sampling time inferred from ``time_s``; ``None`` for a single sample.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no samples")
    idx = np.array([int(r["sample_index"]) for r in rows])
    if not np.array_equal(idx, np.arange(idx.size)):
        raise ValueError(f"{path}: sample_index must run 0, 1, 2, ...")
    t = np.array([float(r["time_s"]) for r in rows])
    x = np.array([float(r["value"]) for r in rows])
    Ts = float(np.mean(np.diff(t))) if t.size > 1 else None
    return x, Ts


def write_frf_csv(path, freq_hz, bins, G, variance=None, valid=None) -> Path:
    """FRF table with columns ``bin,freq_hz,re,im,mag_db,phase_rad,variance,valid_flag``."""
    bins = np.asarray(bins, dtype=int)
    G = np.asarray(G, dtype=complex)
    freq_hz = np.asarray(freq_hz, dtype=float)
    if variance is None:
        variance = np.full(bins.size, np.nan)
    if valid is None:
        valid = np.isfinite(G)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag_db = 20 * np.log10(np.abs(G))
    rows = zip(bins, freq_hz, G.real, G.imag, mag_db, np.angle(G), variance, np.asarray(valid, bool))
    return write_rows_csv(path, FRF_COLUMNS, rows)


def read_frf_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FRF_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    out = {
        "bin": np.array([int(r["bin"]) for r in rows], dtype=int),
        "freq_hz": np.array([float(r["freq_hz"]) for r in rows]),
        "G": np.array([complex(float(r["re"]), float(r["im"])) for r in rows]),
        "variance": np.array([float(r["variance"]) for r in rows]),
        "valid": np.array([r["valid_flag"] == "1" for r in rows], dtype=bool),
    }
    return out


def jsonable(obj):
    """Convert numpy scalars/arrays and NaN into plain JSON-compatible values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
