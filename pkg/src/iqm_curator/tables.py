"""Small CSV helpers shared by the table readers and writers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np


def read_csv_rows(text_or_path):
    """Parse CSV text (or a file path), skipping ``#`` comment lines.

    Returns the header and a list of ``(line_number, row_dict)``. Rows whose
    field count differs from the header raise ``ValueError`` naming the line.
    """
    if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and "\n" not in text_or_path):
        source = f"{text_or_path}: "
        text = Path(text_or_path).read_text()
    else:
        source, text = "", text_or_path
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{source}CSV has no header line")
    parsed = list(csv.reader([ln for _, ln in lines]))
    header = parsed[0]
    rows = []
    for (lineno, _), fields in zip(lines[1:], parsed[1:]):
        if len(fields) != len(header):
            raise ValueError(f"{source}line {lineno}: expected {len(header)} fields, got {len(fields)}")
        rows.append((lineno, dict(zip(header, fields))))
    return header, rows


def fmt(value) -> str:
    """Shortest round-trip text for numbers; ``nan`` for missing."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def render_csv(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()
