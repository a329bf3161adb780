"""Sample-matrix CSV format shared by noise samples and generated datasets.

Layout: optional ``#`` comment line, header ``d0,...,d{D-1}[,label]``,
one row per sample, '.' decimal separator, LF line endings. Floats are
written with 17 significant digits so a round trip is bit-exact.
"""
from __future__ import annotations

import numpy as np


class CsvFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}: line {line}: {message}")
        self.line = line


def format_float(v) -> str:
    return format(float(v), ".17g")


def write_matrix(path, X, labels=None, comment=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    header = [f"d{j}" for j in range(X.shape[1])]
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if labels.size != X.shape[0]:
            raise ValueError("labels must have one entry per row")
        header.append("label")
    lines = []
    if comment is not None:
        if "\n" in comment:
            raise ValueError("comment must be a single line")
        lines.append("# " + comment)
    lines.append(",".join(header))
    for i, row in enumerate(X):
        cells = [format_float(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        lines.append(",".join(cells))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix(path):
    """Return (X, labels or None, comment or None)."""
    with open(path, newline="") as fh:
        raw = fh.read().split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    lineno = 0
    comment = None
    if raw and raw[0].startswith("#"):
        comment = raw[0][1:].strip()
        lineno = 1
    if lineno >= len(raw):
        raise CsvFormatError(path, lineno + 1, "missing header")
    header = raw[lineno].rstrip("\r").split(",")
    has_label = header[-1] == "label"
    cols = header[:-1] if has_label else header
    if not cols or cols != [f"d{j}" for j in range(len(cols))]:
        raise CsvFormatError(path, lineno + 1, "missing or malformed header, expected d0,d1,...")
    d = len(cols)
    rows, labels = [], []
    for offset, text in enumerate(raw[lineno + 1:], start=lineno + 2):
        cells = text.rstrip("\r").split(",")
        if len(cells) != len(header):
            raise CsvFormatError(path, offset, f"expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[:d]])
            if has_label:
                labels.append(int(cells[d]))
        except ValueError as exc:
            raise CsvFormatError(path, offset, str(exc)) from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return X, (np.array(labels, dtype=np.int64) if has_label else None), comment
