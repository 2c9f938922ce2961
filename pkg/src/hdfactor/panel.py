"""Observed-panel representation, CSV ingestion and preprocessing.

A panel is a p-variate time series of length n held series-major: row i is
series i, column t is the cross-section observed at time t.  Every
downstream routine consumes cross-sections, so the series-major layout is
fixed here and CSV orientation is resolved at load time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParseError

__all__ = [
    "Panel",
    "SeasonalSpec",
    "load_csv",
    "save_csv",
    "center",
    "seasonal_demean",
]

ORIENTATIONS = ("rows-are-time", "rows-are-series")


@dataclass(frozen=True)
class Panel:
    """Immutable p x n data matrix with optional series/time labels.

    Parameters
    ----------
    values : array-like, shape (p, n)
        One row per series, one column per time point.  Entries must be
        finite; missing values are rejected rather than imputed.
    series_labels : sequence of str, optional
        Length-p labels for the series.
    time_labels : sequence of str, optional
        Length-n labels for the time points.
    """

    values: np.ndarray
    series_labels: Optional[tuple] = None
    time_labels: Optional[tuple] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, order="C", copy=True)
        if values.ndim != 2:
            raise DimensionError(f"panel values must be 2-D, got {values.ndim}-D")
        p, n = values.shape
        if p < 1 or n < 2:
            raise DimensionError(f"panel must be at least 1 x 2, got {p} x {n}")
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DomainError(
                f"panel contains a non-finite value at series {bad[0] + 1}, time {bad[1] + 1}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        for name, expected in (("series_labels", p), ("time_labels", n)):
            labels = getattr(self, name)
            if labels is not None:
                labels = tuple(str(x) for x in labels)
                if len(labels) != expected:
                    raise DimensionError(
                        f"{name} has {len(labels)} entries, expected {expected}"
                    )
                object.__setattr__(self, name, labels)

    @property
    def p(self) -> int:
        """Number of series."""
        return self.values.shape[0]

    @property
    def n(self) -> int:
        """Number of time points."""
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Panel":
        """Return a new panel with the same labels and different values."""
        return Panel(values, self.series_labels, self.time_labels)


@dataclass(frozen=True)
class SeasonalSpec:
    """Seasonality declaration: observations ``period`` apart share a season."""

    period: int

    def __post_init__(self):
        if int(self.period) != self.period or self.period < 1:
            raise DomainError(f"seasonal period must be a positive integer, got {self.period}")
        object.__setattr__(self, "period", int(self.period))


def _parse_cell(text: str, row: int, col: int) -> float:
    """Parse one CSV cell to a finite float; coordinates are 1-based."""
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric cell {text!r} at row {row}, column {col}"
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {text!r} at row {row}, column {col}")
    return value


def _is_numeric(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def load_csv(path, orientation: str = "rows-are-time") -> Panel:
    """Read a rectangular numeric CSV into a Panel.

    The file may carry a single header row and/or a single leading label
    column; both are detected by non-numeric content.  Cell coordinates in
    error messages are 1-based positions in the file.

    Parameters
    ----------
    path : str or Path
        CSV file, UTF-8, '.' decimal point, no thousands separators.
    orientation : {"rows-are-time", "rows-are-series"}
        How file rows map onto the panel.  The default matches the common
        convention of one time point per CSV row.
    """
    if orientation not in ORIENTATIONS:
        raise DomainError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle)]
    rows = [row for row in rows if row]  # tolerate blank trailing lines
    if not rows:
        raise DimensionError(f"empty table in {path}")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"ragged row {i + 1}: expected {width} fields, got {len(row)}"
            )

    # A header row / label column is recognized only when wholly non-numeric;
    # a stray non-numeric cell inside otherwise numeric data is a parse error.
    has_header = all(not _is_numeric(cell) for cell in rows[0])
    body = rows[1:] if has_header else rows
    if not body:
        raise DimensionError(f"no data rows in {path}")
    has_label_col = all(not _is_numeric(row[0]) for row in body)
    if has_label_col and width < 2:
        raise DimensionError(f"no data columns in {path}")

    row_offset = 2 if has_header else 1
    col_offset = 2 if has_label_col else 1
    data = np.empty((len(body), width - (1 if has_label_col else 0)))
    for i, row in enumerate(body):
        cells = row[1:] if has_label_col else row
        for j, cell in enumerate(cells):
            data[i, j] = _parse_cell(cell, i + row_offset, j + col_offset)

    row_labels = tuple(row[0] for row in body) if has_label_col else None
    col_labels = None
    if has_header:
        col_labels = tuple(rows[0][1:] if has_label_col else rows[0])

    if orientation == "rows-are-time":
        return Panel(data.T, series_labels=col_labels, time_labels=row_labels)
    return Panel(data, series_labels=row_labels, time_labels=col_labels)


def save_csv(panel: Panel, path, orientation: str = "rows-are-time") -> None:
    """Write a panel back to CSV at full round-trip precision (17 digits)."""
    if orientation not in ORIENTATIONS:
        raise DomainError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    if orientation == "rows-are-time":
        matrix = panel.values.T
        col_labels, row_labels = panel.series_labels, panel.time_labels
    else:
        matrix = panel.values
        col_labels, row_labels = panel.time_labels, panel.series_labels
    lines = []
    if col_labels is not None:
        header = list(col_labels)
        if row_labels is not None:
            header = [""] + header
        lines.append(",".join(header))
    for i in range(matrix.shape[0]):
        cells = [format(v, ".17g") for v in matrix[i]]
        if row_labels is not None:
            cells = [row_labels[i]] + cells
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def center(panel: Panel) -> Panel:
    """Subtract each series' full-sample mean."""
    values = panel.values - panel.values.mean(axis=1, keepdims=True)
    return panel.with_values(values)


def seasonal_demean(panel: Panel, spec: SeasonalSpec) -> Panel:
    """Subtract per-season means from each series.

    Observation t belongs to season ``t mod period``; for each series and
    each season, the mean over all observations in that season is removed.
    With period 1 this reduces to :func:`center`; with period n every
    season holds one point and the output is identically zero.
    """
    if spec.period > panel.n:
        raise DomainError(
            f"seasonal period {spec.period} exceeds panel length {panel.n}"
        )
    values = panel.values.copy()
    for season in range(spec.period):
        cols = np.arange(season, panel.n, spec.period)
        values[:, cols] -= values[:, cols].mean(axis=1, keepdims=True)
    return panel.with_values(values)
