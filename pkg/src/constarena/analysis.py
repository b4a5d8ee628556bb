"""Diagnostics over generation logs: coupling, trends, detectors, exports.

Everything here is a pure function of the generation records; the CSV/JSONL
exports are the only interfaces downstream tooling (including the plotting
package) is allowed to consume.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass
from typing import Sequence

from .coevolution import GenerationRecord
from .envs import Faction

CSV_HEADER = ("gen", "S_B", "S_R", "fitness_B", "fitness_R",
              "rules_B", "rules_R", "adv_red")


class AnalysisError(Exception):
    pass


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise AnalysisError("series lengths differ")
    if len(xs) < 2:
        raise AnalysisError("need at least two points")
    try:
        return statistics.correlation(list(xs), list(ys))
    except statistics.StatisticsError as exc:
        raise AnalysisError(f"correlation undefined: {exc}") from exc


def advantage_series(log: Sequence[GenerationRecord],
                     perspective: Faction = Faction.RED) -> list[float]:
    """Per-generation S_own - S_opp from the given side's point of view."""
    if perspective is Faction.RED:
        return [r.s_red - r.s_blue for r in log]
    return [r.s_blue - r.s_red for r in log]


@dataclass(frozen=True)
class WindowSummary:
    start: int  # first generation in the window, 1-based
    end: int
    s_blue: float
    s_red: float
    fitness_blue: float
    fitness_red: float
    rules_blue: float
    rules_red: float


def window_summary(log: Sequence[GenerationRecord],
                   width: int = 5) -> list[WindowSummary]:
    """Arithmetic means over consecutive windows; a short tail still counts."""
    if width < 1:
        raise AnalysisError("width must be >= 1")
    out = []
    for lo in range(0, len(log), width):
        chunk = log[lo:lo + width]
        n = len(chunk)
        out.append(WindowSummary(
            start=chunk[0].g, end=chunk[-1].g,
            s_blue=sum(r.s_blue for r in chunk) / n,
            s_red=sum(r.s_red for r in chunk) / n,
            fitness_blue=sum(r.fitness_blue for r in chunk) / n,
            fitness_red=sum(r.fitness_red for r in chunk) / n,
            rules_blue=sum(r.rules_blue for r in chunk) / n,
            rules_red=sum(r.rules_red for r in chunk) / n,
        ))
    return out


@dataclass(frozen=True)
class CouplingStats:
    correlation: float
    sum_min: float
    sum_max: float
    sum_std: float  # sample standard deviation of S_B + S_R


def coupling_stats(log: Sequence[GenerationRecord]) -> CouplingStats:
    """How tightly the factions' scores move together across a run."""
    if len(log) < 2:
        raise AnalysisError("need at least two generations")
    s_blue = [r.s_blue for r in log]
    s_red = [r.s_red for r in log]
    sums = [b + r for b, r in zip(s_blue, s_red)]
    return CouplingStats(
        correlation=pearson(s_blue, s_red),
        sum_min=min(sums),
        sum_max=max(sums),
        sum_std=statistics.stdev(sums),
    )


def detect_mode_regression(fitness_series: Sequence[float], delta: float = 0.15,
                           window: int = 5) -> int | None:
    """First generation completing `window` straight gens at running-max - delta
    or worse (strictly below); None when fitness never slumps that long."""
    running_max = float("-inf")
    streak = 0
    for g, value in enumerate(fitness_series, start=1):
        running_max = max(running_max, value)
        if value < running_max - delta:
            streak += 1
            if streak >= window:
                return g
        else:
            streak = 0
    return None


def detect_convergence(s_blue: Sequence[float], s_red: Sequence[float],
                       epsilon: float = 0.05, window: int = 5) -> int | None:
    """First generation completing `window` straight gens with |S_B - S_R|
    within epsilon; None if the factions never stay that close."""
    if len(s_blue) != len(s_red):
        raise AnalysisError("series lengths differ")
    streak = 0
    for g, (b, r) in enumerate(zip(s_blue, s_red), start=1):
        if abs(b - r) <= epsilon:
            streak += 1
            if streak >= window:
                return g
        else:
            streak = 0
    return None


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def _format_cell(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(value)  # shortest text that round-trips the float exactly


def export_csv(log: Sequence[GenerationRecord], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in log:
            writer.writerow([
                _format_cell(r.g), _format_cell(r.s_blue), _format_cell(r.s_red),
                _format_cell(r.fitness_blue), _format_cell(r.fitness_red),
                _format_cell(r.rules_blue), _format_cell(r.rules_red),
                _format_cell(r.s_red - r.s_blue),
            ])


def import_csv(path: str) -> list[GenerationRecord]:
    """Rebuilds numeric records from an exported CSV; constitutions are not
    part of the schema and come back empty."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise AnalysisError(f"unexpected CSV header {header!r}")
        for row in reader:
            out.append(GenerationRecord(
                g=int(row[0]), const_blue="", const_red="",
                s_blue=float(row[1]), s_red=float(row[2]),
                fitness_blue=float(row[3]), fitness_red=float(row[4]),
                rules_blue=int(row[5]), rules_red=int(row[6]),
                rejections={},
            ))
    return out


def export_jsonl(log: Sequence[GenerationRecord], path: str):
    with open(path, "w") as fh:
        for r in log:
            fh.write(json.dumps(r.to_json_dict(), sort_keys=True) + "\n")


def import_jsonl(path: str) -> list[GenerationRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(GenerationRecord.from_json_dict(json.loads(line)))
    return out


def export(log: Sequence[GenerationRecord], format: str, path: str):
    if format == "csv":
        export_csv(log, path)
    elif format == "jsonl":
        export_jsonl(log, path)
    else:
        raise AnalysisError(f"unknown export format {format!r}")
