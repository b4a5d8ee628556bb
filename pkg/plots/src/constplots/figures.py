"""The two figure styles: score trajectories and windowed means.

Everything renders through the Agg backend to static files; output bytes
are a pure function of the input log (fixed layout, no timestamps).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "constplots"  # stable ids in SVG output

import matplotlib.pyplot as plt

from .records import GenPoint, PlotsError, load_points

BLUE = "tab:blue"
RED = "tab:red"


def build_trajectory_figure(points: Sequence[GenPoint]):
    """Two stacked panels: per-faction scores, then red advantage over zero."""
    gens = [p.gen for p in points]
    fig, (ax_scores, ax_adv) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True)

    ax_scores.plot(gens, [p.s_blue for p in points], color=BLUE,
                   marker="o", markersize=3, label="S_B")
    ax_scores.plot(gens, [p.s_red for p in points], color=RED,
                   marker="o", markersize=3, label="S_R")
    ax_scores.set_ylabel("stability score")
    ax_scores.legend(loc="lower right")
    ax_scores.grid(True, alpha=0.3)

    ax_adv.axhline(0.0, color="gray", linewidth=1.0, linestyle="--")
    ax_adv.plot(gens, [p.advantage for p in points], color="tab:purple",
                marker="o", markersize=3, label="S_R - S_B")
    ax_adv.set_xlabel("generation")
    ax_adv.set_ylabel("red advantage")
    ax_adv.legend(loc="lower right")
    ax_adv.grid(True, alpha=0.3)

    fig.tight_layout()
    return fig


@dataclass(frozen=True)
class Window:
    start: int
    end: int
    s_blue: float
    s_red: float
    rules: float  # mean rule count across both factions


def window_means(points: Sequence[GenPoint], width: int = 5) -> list[Window]:
    """Arithmetic means over consecutive windows; a short tail still counts."""
    if width < 1:
        raise PlotsError("width must be >= 1")
    out = []
    for lo in range(0, len(points), width):
        chunk = points[lo:lo + width]
        n = len(chunk)
        out.append(Window(
            start=chunk[0].gen, end=chunk[-1].gen,
            s_blue=sum(p.s_blue for p in chunk) / n,
            s_red=sum(p.s_red for p in chunk) / n,
            rules=sum(p.rules_blue + p.rules_red for p in chunk) / (2 * n),
        ))
    return out


def build_window_figure(points: Sequence[GenPoint], width: int = 5):
    """Grouped score bars per window with the mean rule count as a line."""
    windows = window_means(points, width)
    xs = range(len(windows))
    labels = [f"g{w.start}" if w.start == w.end else f"g{w.start}-{w.end}"
              for w in windows]

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.bar([x - 0.2 for x in xs], [w.s_blue for w in windows],
           width=0.4, color=BLUE, label="mean S_B")
    ax.bar([x + 0.2 for x in xs], [w.s_red for w in windows],
           width=0.4, color=RED, label="mean S_R")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_xlabel("generation window")
    ax.set_ylabel("mean stability score")
    ax.legend(loc="upper left")

    ax_rules = ax.twinx()
    ax_rules.plot(list(xs), [w.rules for w in windows], color="black",
                  marker="s", markersize=4, label="mean rules")
    ax_rules.set_ylabel("mean rule count")
    ax_rules.legend(loc="upper right")

    fig.tight_layout()
    return fig


def _save(fig, out_path: str) -> str:
    # Date metadata would make repeated renders differ byte-wise.
    fig.savefig(out_path, dpi=150, metadata={"Date": None})
    plt.close(fig)
    return out_path


def plot_trajectory(source: str, out_path: str) -> str:
    """Renders the two-panel trajectory figure for a log; returns the path."""
    return _save(build_trajectory_figure(load_points(source)), out_path)


def plot_window_summary(source: str, out_path: str, width: int = 5) -> str:
    """Renders the windowed-means figure for a log; returns the path."""
    return _save(build_window_figure(load_points(source), width), out_path)
