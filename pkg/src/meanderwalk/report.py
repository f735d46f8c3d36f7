"""Check results, experiment reports, and plot-data export."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import TableNotFoundError
from .tableio import write_csv

# fields regenerated on every run; excluded from deterministic comparisons
VOLATILE_FIELDS = ("elapsed_seconds", "timestamp")


@dataclass(frozen=True)
class CheckResult:
    """One pass/fail verdict with its measured statistic."""
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        out = (f"{word} {self.name}: statistic={self.statistic:.6g} "
               f"threshold={self.threshold:.6g}")
        return out + (f" ({self.detail})" if self.detail else "")


@dataclass
class ExperimentReport:
    """Named bundle of check results, tables, and run metadata.

    tables maps a table name to (header, rows) ready for CSV export;
    metadata holds scalar run facts (sample counts, seeds, timings).
    """
    name: str
    results: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add_result(self, name: str, passed: bool, statistic: float,
                   threshold: float, detail: str = "") -> CheckResult:
        res = CheckResult(name=name, passed=bool(passed),
                          statistic=float(statistic),
                          threshold=float(threshold), detail=detail)
        self.results.append(res)
        return res

    def add_table(self, name: str, header, rows) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def summary(self) -> str:
        lines = [f"report {self.name}: {'PASS' if self.passed else 'FAIL'}"]
        lines += ["  " + r.line() for r in self.results]
        for key in sorted(self.metadata):
            lines.append(f"  {key} = {format_value(self.metadata[key])}")
        if self.tables:
            lines.append("  tables: " + ", ".join(sorted(self.tables)))
        return "\n".join(lines)

    def emit_plot_data(self, out_dir: str, names=None) -> list:
        """Write tables as CSV files under out_dir; returns written paths.

        names=None exports every table; unknown names raise
        TableNotFoundError listing what is available.
        """
        wanted = sorted(self.tables) if names is None else list(names)
        missing = [n for n in wanted if n not in self.tables]
        if missing:
            raise TableNotFoundError(
                f"unknown tables {missing}; available: {sorted(self.tables)}")
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for table in wanted:
            header, rows = self.tables[table]
            path = os.path.join(out_dir, f"{table}.csv")
            write_csv(path, header, rows)
            paths.append(path)
        return paths

    def to_json(self, include_volatile: bool = True) -> str:
        meta = {k: v for k, v in self.metadata.items()
                if include_volatile or k not in VOLATILE_FIELDS}
        doc = {
            "name": self.name,
            "passed": self.passed,
            "results": [{
                "name": r.name, "passed": r.passed,
                "statistic": r.statistic, "threshold": r.threshold,
                "detail": r.detail,
            } for r in self.results],
            "metadata": {k: format_value(v) for k, v in sorted(meta.items())},
            "tables": sorted(self.tables),
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def format_value(value) -> object:
    """JSON-safe rendering; floats and matrices keep full precision."""
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, dict):
        return {str(k): format_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [format_value(v) for v in value]
    arr = np.asarray(value)
    if arr.ndim == 0:
        return repr(arr.item())
    return [format_value(v) for v in arr.tolist()]


def matrix_block(name: str, matrix: np.ndarray) -> str:
    """Full-precision text block for a matrix, one row per line."""
    rows = [" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(matrix)]
    return "\n".join([name + ":"] + ["  " + r for r in rows])


def timed_metadata(start: float) -> dict:
    return {"elapsed_seconds": time.monotonic() - start,
            "timestamp": time.time()}
