"""Reading curve files into panels and writing panels back out.

Two layouts are understood:

``grid``
    One curve per row, one sampling point per column. CSV files may start with a
    non-numeric header row, which is skipped; the sampling grid is then ``j / G``
    for ``G`` columns. JSON files hold ``{"grid": [...], "curves": [[...], ...]}``,
    where ``grid`` is optional and allows non-uniform sampling.
``coefficients``
    One curve per row, already expressed in the basis (no projection). JSON files
    hold a bare list of rows or ``{"coefficients": [[...], ...]}``.

Row and column numbers in error messages are zero-based and count data rows only.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covtensor import CurvePanel
from .errors import ArgumentError, DataError, FormatError
from .fbasis import BasisSpec, project_curves

__all__ = ["LAYOUTS", "DEFAULT_BAND", "RawTable", "read_table", "ingest", "ingest_with_info", "write_coefficients"]

LAYOUTS = ("grid", "coefficients")
DEFAULT_BAND = "2:8"


@dataclass(frozen=True, eq=False)
class RawTable:
    values: np.ndarray
    grid: np.ndarray | None = None
    header: list[str] | None = None


def _to_float(cell, row: int, col: int) -> float:
    try:
        return float(cell)
    except (TypeError, ValueError):
        raise FormatError(f"cannot parse {cell!r} as a number at row {row}, column {col}") from None


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _check_rows(rows: list[list]) -> np.ndarray:
    if not rows:
        raise FormatError("no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"row {i} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            x = _to_float(cell, i, j)
            if not math.isfinite(x):
                raise DataError(f"non-finite value at row {i}, column {j}", row=i, column=j)
            out[i, j] = x
    return out


def _read_csv(path: Path) -> RawTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path} is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
    return RawTable(_check_rows(rows), None, header)


def _band_from_header(header: list[str] | None) -> BasisSpec | None:
    # headers written by write_coefficients: c<start>, c<start+1>, ...
    if not header or not all(re.fullmatch(r"c\d+", h.strip()) for h in header):
        return None
    idx = [int(h.strip()[1:]) for h in header]
    if idx != list(range(idx[0], idx[0] + len(idx))) or idx[0] < 1:
        return None
    return BasisSpec(p=len(idx), start=idx[0])


def _read_json(path: Path, layout: str) -> RawTable:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from None
    key = "curves" if layout == "grid" else "coefficients"
    grid = None
    if isinstance(doc, dict):
        if key not in doc:
            raise FormatError(f"JSON input for layout {layout!r} needs a {key!r} entry")
        rows = doc[key]
        if layout == "grid" and doc.get("grid") is not None:
            grid = np.array([_to_float(v, -1, j) for j, v in enumerate(doc["grid"])])
    else:
        rows = doc
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise FormatError(f"{key!r} must be a list of rows")
    # json maps NaN/Infinity literals to floats, so they are caught as data errors
    return RawTable(_check_rows(rows), grid)


def read_table(path, layout: str = "grid") -> RawTable:
    """Parse a CSV or JSON file into a finite float matrix (plus grid, if given)."""
    if layout not in LAYOUTS:
        raise ArgumentError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    path = Path(path)
    if path.suffix.lower() == ".json":
        return _read_json(path, layout)
    return _read_csv(path)


def ingest(path, layout: str = "grid", band: BasisSpec | str | None = None) -> CurvePanel:
    """Load a file as a :class:`CurvePanel`.

    ``band`` defaults to ``2:8`` (the delta band) for grid files and to
    ``1:<columns>`` for coefficient files (or the band recorded in a
    ``c<index>`` header).
    """
    return ingest_with_info(path, layout, band)[0]


def ingest_with_info(path, layout: str = "grid", band: BasisSpec | str | None = None):
    """Like :func:`ingest`, also returning a summary dict (N, p, band, grid size)."""
    table = read_table(path, layout)
    if table.values.shape[0] < 2:
        raise FormatError(f"need at least 2 curves, found {table.values.shape[0]}")
    if isinstance(band, str):
        band = BasisSpec.band(band)
    if layout == "coefficients":
        spec = band or _band_from_header(table.header) or BasisSpec(p=table.values.shape[1], start=1)
        if spec.p != table.values.shape[1]:
            raise FormatError(f"{table.values.shape[1]} coefficient columns but the band has p={spec.p}")
        panel = CurvePanel(table.values, spec)
        return panel, _info(path, layout, panel, None)
    spec = band or BasisSpec.band(DEFAULT_BAND)
    G = table.values.shape[1]
    t = table.grid if table.grid is not None else np.arange(G) / G
    if t.shape != (G,):
        raise FormatError(f"grid has {t.size} points but rows have {G} columns")
    panel = CurvePanel(project_curves(t, table.values, spec), spec)
    return panel, _info(path, layout, panel, G)


def _info(path, layout: str, panel: CurvePanel, grid_size: int | None) -> dict:
    return {
        "path": str(path),
        "layout": layout,
        "n": panel.n,
        "p": panel.p,
        "band": f"{panel.basis.start}:{panel.basis.p}",
        "grid_size": grid_size,
    }


def write_coefficients(path, panel: CurvePanel) -> None:
    """Write a panel as a coefficient CSV that reads back bit for bit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"c{f}" for f in panel.basis.fourier_indices])
        writer.writerows([[repr(float(x)) for x in row] for row in panel.coeffs])
