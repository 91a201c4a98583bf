"""Report rows, asserted checks, and their CSV/JSON/SVG emission.

Files written into the output directory:

``rows.csv``     one row per solve (or per case for the set/function tools)
``checks.csv``   every asserted inequality with its raw margin
``report.json``  config echo, rows, checks, summary and exit status
``timings.csv``  wall-clock seconds per row (kept apart so the files above
                 are byte-identical across reruns)
``plot.svg``     optional line plot

plus experiment-specific artifacts (masks as 0/1 text, grid functions as
``i j value`` text or flat little-endian float64).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VIOLATION = 0, 1, 2, 3

SOLVE_COLUMNS = (
    "experiment", "case", "domain", "label", "param", "lambda", "local_energy",
    "nonlocal_energy", "iterations", "residual", "converged", "interior_min", "nodes", "metric",
)
SET_COLUMNS = (
    "case", "polarizer", "nodes_in", "nodes_out", "a_nodes", "b_nodes", "fixed",
    "equals_reflection", "measure_in", "measure_out",
)
FUNCTION_COLUMNS = ("case", "polarizer", "lp_norm_p", "local_energy", "nonlocal_energy", "rayleigh")
SUITE_COLUMNS = ("suite", "cases", "failures", "worst_margin")
CHECK_COLUMNS = ("name", "case", "lhs", "rhs", "tol", "margin", "passed", "detail")

_INT_COLUMNS = {"case", "iterations", "nodes", "nodes_in", "nodes_out", "a_nodes", "b_nodes", "cases", "failures"}
_BOOL_COLUMNS = {"converged", "fixed", "equals_reflection", "passed"}
_TEXT_COLUMNS = {"experiment", "domain", "label", "polarizer", "suite", "name", "detail"}


@dataclass
class Check:
    """Asserted ``lhs <= rhs + tol`` (``<`` when strict); ``margin = rhs + tol - lhs``."""

    name: str
    case: int
    lhs: float
    rhs: float
    tol: float = 0.0
    detail: str = ""
    strict: bool = False

    @property
    def margin(self) -> float:
        return float(self.rhs) + float(self.tol) - float(self.lhs)

    @property
    def passed(self) -> bool:
        return self.margin > 0 if self.strict else self.margin >= 0

    def as_row(self) -> dict[str, Any]:
        row = asdict(self)
        del row["strict"]
        return {**row, "margin": self.margin, "passed": self.passed}


@dataclass
class PlotSpec:
    x: list[float]
    y: list[float]
    xlabel: str
    ylabel: str
    title: str
    logy: bool = False


@dataclass
class Report:
    experiment: str
    columns: tuple[str, ...]
    config: dict[str, str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    timings: list[tuple[str, float]] = field(default_factory=list)
    unconverged: list[str] = field(default_factory=list)
    plot: PlotSpec | None = None
    files: dict[str, str | bytes] = field(default_factory=dict)

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def exit_code(self) -> int:
        if self.unconverged:
            return EXIT_SOLVER
        if self.violations:
            return EXIT_VIOLATION
        return EXIT_OK

    def add_row(self, row: dict[str, Any], seconds: float = 0.0) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append({c: row[c] for c in self.columns})
        self.timings.append((str(row.get("label", row.get("suite", len(self.rows)))), seconds))

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "config": self.config,
            "columns": list(self.columns),
            "rows": self.rows,
            "checks": [c.as_row() for c in self.checks],
            "summary": self.summary,
            "status": {
                "exit_code": self.exit_code,
                "unconverged": self.unconverged,
                "violations": [c.name for c in self.violations],
            },
        }
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _jsonable(obj.item())
    return obj


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return _cell(value.item())
    return str(value)


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def _parse_cell(column: str, text: str):
    if text == "":
        return None
    if column in _BOOL_COLUMNS:
        return text == "true"
    if column in _INT_COLUMNS:
        return int(text)
    if column in _TEXT_COLUMNS:
        return text
    return float(text)


def read_csv(path: str | Path) -> list[dict[str, Any]]:
    """Typed rows back from a CSV written by ``emit_report``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_cell(k, v) for k, v in row.items()} for row in reader]


def emit_report(report: Report, out_dir: str | Path, plot: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        path = out / name
        path.write_text(text)
        written.append(path)

    put("rows.csv", rows_to_csv(report.columns, report.rows))
    put("checks.csv", rows_to_csv(CHECK_COLUMNS, [c.as_row() for c in report.checks]))
    put("report.json", report.to_json())
    for name, content in sorted(report.files.items()):
        path = out / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content)
        written.append(path)
    put("timings.csv", rows_to_csv(("label", "seconds"), [{"label": l, "seconds": s} for l, s in report.timings]))
    if plot and report.plot is not None:
        from .plotting import render_line_plot

        path = out / "plot.svg"
        render_line_plot(report.plot, path)
        written.append(path)
    return written
