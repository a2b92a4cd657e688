"""CSV and JSON persistence for traces, fields, spectra, masks and manifests.

Floats are written with 17 significant digits, which is enough for every
IEEE double to parse back to the identical value.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AU_TIME_FS, ControlField, TimeGrid
from .spectral import SpectralFilter, power_spectrum

TRACE_COLUMNS = (
    "iter", "yield_sum_sq", "avg_fidelity", "phase_fidelity",
    "out_of_band_1", "out_of_band_2", "residual_1", "residual_2",
    "out_of_band_post_1", "out_of_band_post_2", "objective", "energy_penalty",
    "filter_penalty", "field_energy_1", "field_energy_2", "monotone",
)


class DataError(ValueError):
    """Malformed or inconsistent data file (CLI exit code 65)."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length arrays as named columns."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    if len({a.size for a in arrays}) > 1:
        raise ValueError("columns differ in length")
    return write_csv(path, names, zip(*arrays))


def read_csv(path) -> dict:
    """Columns of a numeric CSV as float arrays, keyed by header name."""
    path = Path(path)
    text = path.read_text()
    rows = list(csv.reader(text.splitlines()))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    data = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} values, got {len(r)}")
        try:
            data.append([float(v) for v in r])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    arr = np.array(data, float)
    return {h: arr[:, i].copy() for i, h in enumerate(header)}


def _pad2(values) -> tuple:
    return (tuple(values) + (float("nan"),) * 2)[:2]


def trace_rows(records):
    for r in records:
        oob = _pad2(r.out_of_band_pre)
        res = _pad2(r.monotonicity_residual)
        post = _pad2(r.out_of_band_post)
        en = _pad2(r.field_energy)
        ft = r.functional
        yield (r.iter, r.yield_sum_sq, r.avg_fidelity, r.phase_fidelity, oob[0], oob[1],
               res[0], res[1], post[0], post[1], ft.objective, ft.energy_penalty,
               ft.filter_penalty, en[0], en[1], r.monotone)


def write_trace(path, records) -> Path:
    return write_csv(path, TRACE_COLUMNS, trace_rows(records))


def write_fields(path, grid: TimeGrid, fields: Sequence[ControlField]) -> Path:
    cols = {"t_fs": grid.t * AU_TIME_FS}
    for i in (1, 2):
        cols[f"eps{i}"] = fields[i - 1].samples if len(fields) >= i else np.full(grid.n_nodes, np.nan)
    return write_columns(path, cols)


def read_fields(path, grid: TimeGrid = None) -> tuple:
    """``(t_fs, [eps1, eps2?])``; an all-``nan`` ``eps2`` column is dropped."""
    cols = read_csv(path)
    if "t_fs" not in cols or "eps1" not in cols:
        raise DataError(f"{path}: need t_fs and eps1 columns")
    t = cols["t_fs"]
    fields = [cols["eps1"]]
    if "eps2" in cols and not np.all(np.isnan(cols["eps2"])):
        fields.append(cols["eps2"])
    for f in fields:
        if not np.all(np.isfinite(f)):
            raise DataError(f"{path}: non-finite field samples")
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: time column must increase")
    if grid is not None:
        if t.size != grid.n_nodes:
            raise DataError(f"{path}: {t.size} samples, grid has {grid.n_nodes} nodes")
        if np.max(np.abs(t - grid.t * AU_TIME_FS)) > 1e-9 * max(1.0, t[-1]):
            raise DataError(f"{path}: time nodes do not match the grid")
    return t, fields


def grid_from_times(t_fs: np.ndarray) -> TimeGrid:
    """Uniform grid implied by a time column starting at zero."""
    n = t_fs.size - 1
    if n < 2 or abs(t_fs[0]) > 1e-12:
        raise DataError("time column must start at 0 and have at least 3 nodes")
    dt = (t_fs[-1] / n) / AU_TIME_FS
    if np.max(np.abs(np.diff(t_fs) / AU_TIME_FS - dt)) > 1e-6 * dt:
        raise DataError("time column is not uniform")
    return TimeGrid(n, dt)


def write_spectra(path, grid: TimeGrid, fields) -> Path:
    cols = {}
    for i, f in enumerate(fields, start=1):
        om, P = power_spectrum(f, grid)
        cols.setdefault("omega_cm", om)
        cols[f"power_{i}"] = P
    return write_columns(path, cols)


def write_masks(path, filters: Sequence[SpectralFilter]) -> Path:
    grid = filters[0].grid
    w = grid.freqs_cm
    keep = w >= 0
    order = np.argsort(w[keep], kind="stable")
    cols = {"omega_cm": w[keep][order]}
    for i, f in enumerate(filters, start=1):
        cols[f"mask_{i}"] = f.mask[keep][order]
    return write_columns(path, cols)


def write_json(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
