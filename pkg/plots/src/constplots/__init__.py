"""Static figures from exported arena run logs (CSV or JSONL)."""

from .figures import (
    Window,
    build_trajectory_figure,
    build_window_figure,
    plot_trajectory,
    plot_window_summary,
    window_means,
)
from .records import (
    CSV_HEADER,
    GenPoint,
    PlotsError,
    load_points,
    read_csv,
    read_jsonl,
)

__all__ = [
    "CSV_HEADER",
    "GenPoint",
    "PlotsError",
    "Window",
    "build_trajectory_figure",
    "build_window_figure",
    "load_points",
    "plot_trajectory",
    "plot_window_summary",
    "read_csv",
    "read_jsonl",
    "window_means",
]
