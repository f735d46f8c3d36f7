"""CSV emission with the package-wide dialect: comma separated, dot
decimal marks, one header row, LF line endings."""

from __future__ import annotations

import csv


def format_cell(v) -> str:
    if isinstance(v, float):
        # repr of the builtin float round-trips; numpy scalars do not
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_csv(path) -> tuple:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return rows[0], rows[1:]
