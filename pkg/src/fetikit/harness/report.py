"""Experiment reports: per-run records plus study-level derived quantities.

Two output formats are emitted: a nested key-value structured text file with
the full record (including wall times), and a flat comma-separated table.
The table excludes wall times so that re-running an identical configuration
reproduces it byte for byte; floats are rendered with Python's
shortest-round-trip repr in both formats.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RunRecord:
    """One solver run: configuration echo, sizes, diagnostics, verdict."""

    label: str
    params: dict
    values: dict
    wall_time: float = 0.0
    passed: bool = True
    failure: str | None = None

    def flat(self) -> dict:
        out = {"label": self.label}
        out.update(self.params)
        out.update(self.values)
        out["passed"] = self.passed
        out["failure"] = self.failure if self.failure else ""
        return out


@dataclass
class ExperimentReport:
    study: str
    config_echo: dict
    rows: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return _fmt(value.item())
    if isinstance(value, int):
        return str(value)
    return str(value)


def _structured_lines(value, indent: int, lines: list) -> None:
    pad = "  " * indent
    if isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, (dict, list, tuple)):
                lines.append(f"{pad}{key}:")
                _structured_lines(item, indent + 1, lines)
            else:
                lines.append(f"{pad}{key}: {_fmt(item)}")
    elif isinstance(value, (list, tuple)):
        for item in value:
            if isinstance(item, (dict, list, tuple)):
                lines.append(f"{pad}-")
                _structured_lines(item, indent + 1, lines)
            else:
                lines.append(f"{pad}- {_fmt(item)}")
    else:
        lines.append(f"{pad}{_fmt(value)}")


def render_structured(report: ExperimentReport) -> str:
    doc = {
        "study": report.study,
        "config": report.config_echo,
        "rows": [
            {
                **row.flat(),
                "wall_time_s": row.wall_time,
            }
            for row in report.rows
        ],
        "derived": report.derived,
        "all_passed": report.all_passed,
    }
    lines: list[str] = []
    _structured_lines(doc, 0, lines)
    return "\n".join(lines) + "\n"


def render_table(report: ExperimentReport) -> str:
    """Flat CSV with a mandatory header; deterministic column order.

    Columns are collected in first-appearance order across rows; wall time
    is deliberately excluded so identical configurations reproduce the table
    byte for byte.
    """
    columns: list[str] = []
    flats = []
    for row in report.rows:
        flat = row.flat()
        flats.append(flat)
        for key in flat:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for flat in flats:
        writer.writerow([_fmt(flat.get(key)) for key in columns])
    return buf.getvalue()


class IoError(Exception):
    """Report files could not be written."""


def emit_report(report: ExperimentReport, out_dir, fmt: str = "both") -> list:
    """Write the report files and return their paths."""
    if fmt not in ("table", "structured", "both"):
        raise ValueError(f"unknown report format '{fmt}'")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if fmt in ("table", "both"):
            path = out / f"{report.study}_table.csv"
            path.write_text(render_table(report), encoding="utf-8")
            paths.append(path)
        if fmt in ("structured", "both"):
            path = out / f"{report.study}_report.txt"
            path.write_text(render_structured(report), encoding="utf-8")
            paths.append(path)
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from exc
    return paths
