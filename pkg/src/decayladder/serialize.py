"""Deterministic file output helpers.

All data files are written atomically (temp file + rename) with comma
separators, '.' decimals, a header row, and LF line endings.  Floats are
formatted with repr, i.e. the shortest digit string that round-trips, so a
rerun with identical inputs produces byte-identical files.
"""

from __future__ import annotations

import json
import os


def _fmt(value) -> str:
    # float(...) unwraps numpy scalars so cells read "1.5", not
    # "np.float64(1.5)"; np.float64 subclasses float, so check it first.
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        inner = value.item()
        return repr(inner) if isinstance(inner, float) else str(inner)
    return str(value)


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, columns) -> None:
    """Write equal-length columns as CSV with the given header names."""
    columns = [list(c) for c in columns]
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("CSV columns must have equal length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2) + "\n")
