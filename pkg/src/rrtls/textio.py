"""Deterministic text I/O: matrix files, CSV tables, JSON documents.

All floating-point values are emitted with 17 significant digits, which
round-trips IEEE doubles exactly, so emitted files are byte-stable across
runs and parse back to numerically identical values.  Matrix files are
whitespace-delimited decimals, one matrix per file, with the dimensions on
the first line as ``N p``.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .errors import ConfigError


def format_float(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return format(x, ".17g")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


# ---------------------------------------------------------------------------
# Matrix files
# ---------------------------------------------------------------------------

def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]  # vectors are stored as single-column matrices
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    for row in M:
        lines.append(" ".join(format_float(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Parse a matrix file; raises ConfigError on any malformation."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read matrix file {path}: {err}") from err
    tokens = raw.split()
    if len(tokens) < 2:
        raise ConfigError(f"matrix file {path} is missing its dimension header")
    try:
        n, p = int(tokens[0]), int(tokens[1])
    except ValueError as err:
        raise ConfigError(f"matrix file {path} has a malformed header") from err
    if n < 1 or p < 1:
        raise ConfigError(f"matrix file {path} declares empty dimensions {n} x {p}")
    body = tokens[2:]
    if len(body) != n * p:
        raise ConfigError(
            f"matrix file {path} declares {n}x{p} = {n * p} entries, found {len(body)}"
        )
    try:
        values = np.array([float(t) for t in body], dtype=float)
    except ValueError as err:
        raise ConfigError(f"matrix file {path} contains a non-numeric entry") from err
    if not np.isfinite(values).all():
        raise ConfigError(f"matrix file {path} contains non-finite entries")
    return values.reshape(n, p)


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if 1 not in M.shape:
        raise ConfigError(f"expected a vector in {path}, got shape {M.shape}")
    return M.reshape(-1)


# ---------------------------------------------------------------------------
# CSV and JSON emission
# ---------------------------------------------------------------------------

def _csv_field(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(_csv_field(h) for h in header)]
    for row in rows:
        lines.append(",".join(_csv_field(format_value(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_csv(text: str):
    """Parse CSV emitted by :func:`csv_text` back into (header, rows of
    strings)."""
    import csv
    import io

    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    return rows[0], rows[1:]


def json_text(value) -> str:
    """Serialize nested dict/list/scalar structures with 17-significant-digit
    floats (non-finite floats become null) and stable key order (insertion
    order of the dicts)."""
    out = []
    _emit_json(value, out)
    return "".join(out) + "\n"


def _emit_json(v, out) -> None:
    if isinstance(v, dict):
        out.append("{")
        for i, (key, item) in enumerate(v.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _emit_json(item, out)
        out.append("}")
    elif isinstance(v, (list, tuple)) or isinstance(v, np.ndarray):
        seq = v.tolist() if isinstance(v, np.ndarray) else v
        out.append("[")
        for i, item in enumerate(seq):
            if i:
                out.append(",")
            _emit_json(item, out)
        out.append("]")
    elif isinstance(v, (bool, np.bool_)):
        out.append("true" if v else "false")
    elif v is None:
        out.append("null")
    elif isinstance(v, (int, np.integer)):
        out.append(str(int(v)))
    elif isinstance(v, (float, np.floating)):
        out.append(format_float(float(v)) if np.isfinite(v) else "null")
    elif isinstance(v, str):
        out.append(json.dumps(v))
    else:
        raise TypeError(f"cannot serialize value of type {type(v)!r}")


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
