"""
This module writes planned inputs, trajectories and study tables as CSV
files and prints plan reports.
"""

import logging
from pathlib import Path

import numpy as np

from .constants import CSV_DIGITS
from .discretize import grid_points
from .flatness import SampledSignal

log = logging.getLogger(__name__)

CSV_FORMAT = f"%.{CSV_DIGITS}g"


def write_table(path, header, rows):
    """Writes rows of numbers under a comma-separated header line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.atleast_2d(np.asarray(rows, dtype=float))
    if data.size == 0:
        data = data.reshape(0, len(header))
    np.savetxt(path, data, fmt=CSV_FORMAT, delimiter=",", header=",".join(header), comments="")
    log.info("wrote %d rows to %s", data.shape[0], path)
    return path


def write_signal(path, signal):
    """Columns t, value (and derivative when the signal carries one)"""
    if signal.derivative is None:
        return write_table(path, ["t", "value"], np.column_stack([signal.times, signal.values]))
    return write_table(path, ["t", "value", "derivative"],
                       np.column_stack([signal.times, signal.values, signal.derivative]))


def read_signal(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    derivative = data[:, 2] if data.shape[1] > 2 else None
    return SampledSignal(data[:, 0], data[:, 1], derivative)


def write_trajectory(path, trajectory):
    """Long format: one row per (t, x) pair"""
    x = grid_points(trajectory.n)
    t = np.repeat(trajectory.times, trajectory.n)
    rows = np.column_stack([t, np.tile(x, len(trajectory.times)), trajectory.states.ravel()])
    return write_table(path, ["t", "x", "value"], rows)


def write_levels(directory, levels):
    """One r_<i>.csv per truncation level"""
    return [write_signal(Path(directory) / f"r_{i}.csv", signal) for i, signal in sorted(levels.items())]


def _format_value(value):
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def format_report(report, title="PLAN REPORT"):
    lines = [f"\n===== {title} ====="]
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(f"{key}:")
            lines.extend(f"  {k}: {_format_value(v)}" for k, v in value.items())
        else:
            lines.append(f"{key}: {_format_value(value)}")
    return "\n".join(lines)


def display_report(report, title="PLAN REPORT"):
    print(format_report(report, title))
