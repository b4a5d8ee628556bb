"""Reading exported run logs.

Only the two documented export formats are understood: the eight-column
CSV and the generations JSONL. A run directory resolves to whichever of
the two is present (CSV wins when both are); internal checkpoint files
such as archives or constitution snapshots are never touched.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

CSV_HEADER = ("gen", "S_B", "S_R", "fitness_B", "fitness_R",
              "rules_B", "rules_R", "adv_red")

CSV_NAME = "report.csv"
JSONL_NAME = "generations.jsonl"


class PlotsError(Exception):
    pass


@dataclass(frozen=True)
class GenPoint:
    """One generation's numbers, format-independent."""

    gen: int
    s_blue: float
    s_red: float
    fitness_blue: float
    fitness_red: float
    rules_blue: int
    rules_red: int

    @property
    def advantage(self) -> float:
        return self.s_red - self.s_blue


def read_csv(path: str) -> list[GenPoint]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise PlotsError(f"{path}: empty file") from None
        if header != CSV_HEADER:
            raise PlotsError(f"{path}: unexpected CSV header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(GenPoint(
                    gen=int(row[0]),
                    s_blue=float(row[1]), s_red=float(row[2]),
                    fitness_blue=float(row[3]), fitness_red=float(row[4]),
                    rules_blue=int(row[5]), rules_red=int(row[6]),
                ))
            except (IndexError, ValueError) as exc:
                raise PlotsError(f"{path}:{lineno}: bad row: {exc}") from exc
    return out


def read_jsonl(path: str) -> list[GenPoint]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                out.append(GenPoint(
                    gen=int(data["g"]),
                    s_blue=float(data["s_blue"]), s_red=float(data["s_red"]),
                    fitness_blue=float(data["fitness_blue"]),
                    fitness_red=float(data["fitness_red"]),
                    rules_blue=int(data["rules_blue"]),
                    rules_red=int(data["rules_red"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise PlotsError(f"{path}:{lineno}: bad record: {exc}") from exc
    return out


def load_points(source: str) -> list[GenPoint]:
    """Loads a log from a .csv/.jsonl file or from a run directory."""
    if os.path.isdir(source):
        for name, reader in ((CSV_NAME, read_csv), (JSONL_NAME, read_jsonl)):
            path = os.path.join(source, name)
            if os.path.exists(path):
                points = reader(path)
                break
        else:
            raise PlotsError(
                f"{source}: neither {CSV_NAME} nor {JSONL_NAME} found")
    elif os.path.exists(source):
        if source.endswith(".csv"):
            points = read_csv(source)
        elif source.endswith(".jsonl"):
            points = read_jsonl(source)
        else:
            raise PlotsError(f"{source}: expected a .csv or .jsonl log")
    else:
        raise PlotsError(f"{source}: no such file or directory")
    if not points:
        raise PlotsError(f"{source}: log holds no generations")
    return points
