"""CSV/report emission for runs and cross-tolerance comparisons.

All floats are written with 17 significant digits and the C locale so that
repeated runs with the direct solver produce byte-identical files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptive import RunRecord

__all__ = [
    "ReportBundle",
    "load_bundle",
    "write_goal_csv",
    "write_iterations_csv",
    "write_summary",
    "read_summary",
    "load_reference",
    "comparison_table",
    "write_comparison",
]

GOAL_CSV = "goal_trajectory.csv"
ITERATIONS_CSV = "iterations.csv"
SUMMARY_CSV = "summary.csv"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


@dataclass
class ReportBundle:
    """File locations and summary record of one run output directory."""

    directory: Path
    summary: dict

    @property
    def goal_path(self) -> Path:
        return self.directory / GOAL_CSV

    @property
    def iterations_path(self) -> Path:
        return self.directory / ITERATIONS_CSV


def load_bundle(directory) -> ReportBundle:
    return ReportBundle(Path(directory), read_summary(directory))


def write_goal_csv(directory, times, goal_rom=None, goal_fom=None) -> Path:
    """Per-element goal integrand columns; at least one series required."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns: list[tuple[str, np.ndarray]] = [("t", np.asarray(times))]
    if goal_rom is not None:
        columns.append(("goal_rom", np.asarray(goal_rom)))
    if goal_fom is not None:
        columns.append(("goal_fom", np.asarray(goal_fom)))
    if len(columns) == 1:
        raise ValueError("need at least one goal series")
    n = len(columns[0][1])
    path = directory / GOAL_CSV
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([name for name, _ in columns])
        for i in range(n):
            writer.writerow([_fmt(float(series[i])) for _, series in columns])
    return path


def write_iterations_csv(directory, record: RunRecord) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / ITERATIONS_CSV
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "eta_rel", "e_rel", "n_primal_u",
                         "n_primal_p", "n_dual_u", "n_dual_p", "fom_solves",
                         "wall_time_s", "J_rom", "m_max"])
        for log in record.iterations:
            writer.writerow([
                log.iteration, _fmt(log.eta_rel), _fmt(log.e_rel),
                *log.basis_sizes, log.fom_solves, _fmt(log.wall_time),
                _fmt(log.J_rom), _fmt(log.m_max),
            ])
    return path


def write_summary(directory, summary: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / SUMMARY_CSV
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(summary.keys()))
        writer.writerow([_fmt(v) for v in summary.values()])
    return path


def read_summary(directory) -> dict:
    path = Path(directory) / SUMMARY_CSV
    with open(path, "r", newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if len(rows) < 2:
        raise ValueError(f"malformed summary file {path}")
    return dict(zip(rows[0], rows[1]))


def summary_from_record(record: RunRecord, fingerprint: str) -> dict:
    """Summary row mirroring the tolerance-comparison table columns."""
    sizes = record.basis_sizes
    rom_size = f"{sizes[0]} / {sizes[1]} + {sizes[2]} / {sizes[3]}"
    return {
        "fingerprint": fingerprint,
        "run_kind": "moredwr",
        "status": "converged" if record.converged else "not_converged",
        "tol_rel_pct": 100.0 * record.tol_rel,
        "e_rel_pct": None if record.e_rel is None else 100.0 * record.e_rel,
        "speedup": record.speedup,
        "fom_solves": record.fom_solves,
        "rom_size": rom_size,
        "I_eff": record.I_eff,
        "I_ind": record.I_ind,
        "eta_rel_pct": 100.0 * record.eta_rel,
        "eta": record.eta,
        "J_rom": record.J_rom,
        "J_fom": record.J_fom,
        "wall_time_s": record.wall_time,
        "gmres_mean_iterations": record.gmres_mean_iterations,
    }


def load_reference(directory) -> dict:
    """Load a full-order reference bundle: goal value, series and wall time."""
    summary = read_summary(directory)
    if summary.get("run_kind") != "fom":
        raise ValueError(f"{directory} does not hold a full-order reference run")
    goal_path = Path(directory) / GOAL_CSV
    times, series = [], []
    with open(goal_path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            times.append(float(row["t"]))
            series.append(float(row["goal_fom"]))
    return {
        "fingerprint": summary["fingerprint"],
        "J_fom": float(summary["J_fom"]),
        "wall_time_s": float(summary["wall_time_s"]),
        "times": np.asarray(times),
        "goal_series": np.asarray(series),
    }


COMPARE_COLUMNS = ["tol_rel_pct", "e_rel_pct", "speedup", "fom_solves",
                   "rom_size", "I_eff", "I_ind"]


def comparison_table(summaries: list[dict]) -> list[dict]:
    """Align MORe-DWR summaries over tolerances (largest tolerance last)."""
    if not summaries:
        raise ValueError("need at least one summary")
    fingerprints = {s.get("fingerprint") for s in summaries}
    if len(fingerprints) != 1:
        raise ValueError(
            f"summaries come from different problems: {sorted(fingerprints)}")
    for s in summaries:
        if s.get("run_kind") != "moredwr":
            raise ValueError("comparison expects adaptive-run summaries")
    rows = sorted(summaries, key=lambda s: float(s["tol_rel_pct"]))
    return [{c: row.get(c, "") for c in COMPARE_COLUMNS} for row in rows]


def format_comparison(rows: list[dict]) -> str:
    header = ["TOL_rel [%]", "e_rel [%]", "speedup", "FOM solves",
              "ROM size", "I_eff", "I_ind"]
    table = [header]
    for row in rows:
        table.append([_short(row[c]) for c in COMPARE_COLUMNS])
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _short(value) -> str:
    if value in (None, ""):
        return "-"
    try:
        number = float(value)
    except (TypeError, ValueError):
        return str(value)
    if number == int(number) and abs(number) < 1e6:
        return str(int(number))
    return f"{number:.4g}"


def write_comparison(directory, rows: list[dict]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "comparison.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(COMPARE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) if not isinstance(row[c], str)
                             else row[c] for c in COMPARE_COLUMNS])
    return path
