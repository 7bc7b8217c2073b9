"""Markdown summary tables for experiment results.

Suitable for terminal output or pasting into notes next to the data files.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Any


def format_value(value: Any, digits: int = 4) -> str:
    """Compact number formatting: fixed point for moderate magnitudes."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if value != 0 and not 1e-3 <= abs(value) < 1e5:
            return f"{value:.{digits - 1}e}"
        return f"{value:.{digits}g}"
    return str(value)


def format_estimate(mean: float, stderr: float) -> str:
    """`mean ± stderr` with matching precision."""
    if not math.isfinite(stderr) or stderr == 0:
        return format_value(mean)
    return f"{format_value(mean)} ± {format_value(stderr, digits=2)}"


def summary_table(rows: Sequence[dict[str, Any]], columns: Sequence[str] | None = None) -> str:
    """Markdown table of rows; columns default to the keys of the first row."""
    if not rows:
        return "*no rows*"
    cols = list(columns) if columns is not None else list(rows[0])
    lines = [
        "| " + " | ".join(cols) + " |",
        "|" + "|".join("-" * (len(c) + 2) for c in cols) + "|",
    ]
    for row in rows:
        lines.append("| " + " | ".join(format_value(row.get(c)) for c in cols) + " |")
    return "\n".join(lines)


def registry_table(entries: Sequence[dict[str, Any]]) -> str:
    """Table for `qfitime info`: experiment id, desk and paper-scale sample counts."""
    return summary_table(entries, ["experiment", "samples", "paper_samples", "description"])
