"""CSV helpers shared by the writers.

Floats are written with ``repr``, the shortest decimal string that parses back
to the same binary64 value, so every table round-trips losslessly.
"""

import csv
import io

import numpy as np

from .errors import ValidationError


def fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def read_csv_rows(text, source="<csv>"):
    """Split CSV text into ``(header, rows)`` skipping ``#`` comment lines.

    Rows carry their 1-based line number for error messages.
    """
    header = None
    rows = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = next(csv.reader([stripped]))
        if header is None:
            header = [f.strip() for f in fields]
            continue
        if len(fields) != len(header):
            raise ValidationError(
                f"{source}: line {lineno}, column 1: expected {len(header)} fields, got {len(fields)}"
            )
        rows.append((lineno, fields))
    if header is None:
        raise ValidationError(f"{source}: no header row found")
    return header, rows


def parse_float(s, source, lineno, col):
    try:
        return float(s)
    except ValueError:
        raise ValidationError(f"{source}: line {lineno}, column {col}: not a number: {s!r}") from None
