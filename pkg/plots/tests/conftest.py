"""Shared corpus builders: rows are (gen, s_b, s_r, fit_b, fit_r, rules_b, rules_r)."""

import csv
import json
import random

CSV_HEADER = ["gen", "S_B", "S_R", "fitness_B", "fitness_R",
              "rules_B", "rules_R", "adv_red"]


def rising_rows(n=30):
    """A run that climbs toward ~0.78 for both sides, rule books growing."""
    rng = random.Random(5)
    rows = []
    for i in range(n):
        t = i / (n - 1)
        s_b = round(0.37 + 0.41 * t + rng.uniform(-0.01, 0.01), 4)
        s_r = round(0.18 + 0.60 * t + rng.uniform(-0.01, 0.01), 4)
        rows.append((i + 1, s_b, s_r, s_b - s_r, s_r - s_b,
                     2 + i // 3, 2 + i // 4))
    return rows


def parity_rows(n=12):
    """Both factions score the same every generation."""
    rng = random.Random(6)
    rows = []
    for i in range(n):
        s = round(rng.uniform(0.2, 0.7), 4)
        rows.append((i + 1, s, s, 0.0, 0.0, 5, 5))
    return rows


def constant_rows(n=30):
    return [(i + 1, 0.4, 0.25, 0.15, -0.15, 6, 4) for i in range(n)]


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for gen, s_b, s_r, fit_b, fit_r, rules_b, rules_r in rows:
            writer.writerow([gen, repr(s_b), repr(s_r), repr(fit_b),
                             repr(fit_r), rules_b, rules_r, repr(s_r - s_b)])
    return str(path)


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for gen, s_b, s_r, fit_b, fit_r, rules_b, rules_r in rows:
            fh.write(json.dumps({
                "g": gen, "const_blue": "", "const_red": "",
                "s_blue": s_b, "s_red": s_r,
                "fitness_blue": fit_b, "fitness_red": fit_r,
                "rules_blue": rules_b, "rules_red": rules_r,
                "rejections": {},
            }, sort_keys=True) + "\n")
    return str(path)
