"""CSV readers for the experiment artifacts, with schema validation."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np


class SchemaError(Exception):
    """Input file does not match the figure kind's expected layout."""


PEAK_FWHM_COLUMNS = (
    "frequency_hz",
    "tx_focus_m",
    "depth_m",
    "theta",
    "das_peak",
    "tidas_peak",
    "das_peak_norm",
    "tidas_peak_norm",
    "das_fwhm_s",
    "tidas_fwhm_s",
    "abs_fwhm_diff_s",
)

BOX_COLUMNS = (
    "frequency_hz",
    "tx_focus_m",
    "n",
    "median_s",
    "q1_s",
    "q3_s",
    "whisker_lo_s",
    "whisker_hi_s",
    "n_outliers",
)

LINE_COLUMNS = ("depth_m", "das", "tidas")


def read_table(path: Path, expected: Sequence[str]) -> Dict[str, np.ndarray]:
    """Read a headered CSV and return named float columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    for column in expected:
        if column not in header:
            raise SchemaError(f"{path}: missing column {column!r}")
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for column in expected:
        idx = header.index(column)
        out[column] = np.array([float(r[idx]) for r in body])
    return out


def read_matrix(path: Path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a depth-indexed matrix: first row target depths, first column row depths."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    if len(rows) < 2 or len(rows[0]) < 2:
        raise SchemaError(f"{path}: no data rows")
    try:
        targets = np.array([float(v) for v in rows[0][1:]])
        refs = np.array([float(r[0]) for r in rows[1:]])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed matrix cell ({exc})") from exc
    if values.shape != (len(refs), len(targets)):
        raise SchemaError(f"{path}: ragged matrix body")
    return refs, targets, values
