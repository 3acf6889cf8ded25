"""Delimited-text data files and result tables."""

from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass

import numpy as np

from .likelihood import LikelihoodError, validate_data


class DataError(ValueError):
    """Malformed or out-of-support input data."""


@dataclass
class Dataset:
    X: np.ndarray
    ids: list[str] | None = None
    labels: list[str] | None = None

    @property
    def row_names(self) -> list[str]:
        return self.ids if self.ids is not None else [str(j + 1) for j in range(self.X.shape[0])]

    @property
    def position_names(self) -> list[str]:
        if self.labels is not None:
            return self.labels
        return [str(t + 1) for t in range(self.X.shape[1])]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _sniff_delimiter(path, text):
    if str(path).endswith(".csv"):
        return ","
    first = text.splitlines()[0] if text else ""
    for d in (",", "\t", ";"):
        if d in first:
            return d
    return None


def _flag(value, auto):
    if value in ("auto", None):
        return auto
    return bool(value)


def load_dataset(path, delimiter=None, header="auto", ids="auto", family=None) -> Dataset:
    """Read a sequences-by-positions matrix.

    ``header`` / ``ids``: True, False or "auto" (detected from non-numeric
    cells in the first row / first column).  With ``delimiter=None`` the
    delimiter is guessed; whitespace-separated files are accepted.  When
    ``family`` is given the values are checked against its support.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    if not text.strip():
        raise DataError(f"{path}: empty file")
    delim = delimiter if delimiter is not None else _sniff_delimiter(path, text)
    if delim is None:
        rows = [line.split() for line in text.splitlines()]
    else:
        rows = list(csv.reader(_io.StringIO(text), delimiter=delim))
    numbered = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{path}: no data rows")
    has_header = _flag(header, not all(_is_number(c) for c in numbered[0][1] if c))
    labels = None
    if has_header:
        labels = numbered[0][1]
        numbered = numbered[1:]
        if not numbered:
            raise DataError(f"{path}: header but no data rows")
    has_ids = _flag(ids, any(not _is_number(r[0]) for _, r in numbered))
    width = len(numbered[0][1])
    values, names = [], []
    for line, cells in numbered:
        if len(cells) != width:
            raise DataError(f"{path}, line {line}: expected {width} cells, found {len(cells)}")
        if has_ids:
            names.append(cells[0])
            cells = cells[1:]
        row = []
        for col, c in enumerate(cells, start=2 if has_ids else 1):
            try:
                v = float(c)
            except ValueError:
                raise DataError(f"{path}, line {line}, column {col}: cannot parse {c!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}, line {line}, column {col}: non-finite value {c!r}")
            row.append(v)
        values.append(row)
    X = np.array(values, dtype=np.float64)
    if family is not None:
        try:
            validate_data(X, family)
        except LikelihoodError:
            # report the first offending cell by its position in the file
            for (line, _), row in zip(numbered, values):
                for t, v in enumerate(row):
                    try:
                        validate_data(np.array([[v]]), family)
                    except LikelihoodError:
                        col = t + (2 if has_ids else 1)
                        raise DataError(f"{path}, row {line}, column {col}: value {v!r} is "
                                        f"outside the support of {family}") from None
            raise
    if X.shape[1] == 0:
        raise DataError(f"{path}: no data columns")
    if labels is not None:
        if has_ids:
            labels = labels[1:]
        if len(labels) != X.shape[1]:
            raise DataError(f"{path}: header has {len(labels)} position labels for "
                            f"{X.shape[1]} columns")
    return Dataset(X, names if has_ids else None, labels)


def format_value(v, raw=False) -> str:
    v = float(v)
    if raw:
        return repr(v)
    return format(v, ".6g")


def save_dataset(path, data: Dataset, delimiter=",", raw=True):
    """Write ``data`` in the layout :func:`load_dataset` reads back."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if data.labels is not None:
            w.writerow((["id"] if data.ids is not None else []) + list(data.labels))
        for j, row in enumerate(data.X):
            cells = [format_value(v, raw) for v in row]
            w.writerow(([data.ids[j]] if data.ids is not None else []) + cells)


def write_matrix(path, M, row_names, col_names, raw=False, corner="id"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner] + list(col_names))
        for name, row in zip(row_names, M):
            w.writerow([name] + [format_value(v, raw) for v in row])


def write_changepoints(path, Z, row_names, col_names):
    """One (sequence, position) line per changepoint."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "position"])
        for j, t in zip(*np.nonzero(np.asarray(Z))):
            w.writerow([row_names[j], col_names[t]])


def write_vector(path, v, names, header=("position", "value"), raw=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for name, x in zip(names, v):
            w.writerow([name, "nan" if np.isnan(x) else format_value(x, raw)])


def read_table(path):
    """Header and rows of a result table written by this module."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
