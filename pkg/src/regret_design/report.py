"""Delimited output and figure rendering for experiment reports.

CSV files carry a header row, UTF-8 text, '.' decimal separators and full
double precision (17 significant digits), so identical runs produce
byte-identical files. Every writer goes through a temp-file rename, never
leaving partial output behind. Figures are rendered headlessly through
matplotlib Figure objects (no pyplot global state) and saved as PNG next to
the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from matplotlib.figure import Figure

from .estimation import Allocation
from .harness import RegretReport, SweepResult

__all__ = [
    "figure_allocation",
    "figure_bound_checks",
    "figure_compare",
    "figure_regret_histogram",
    "figure_sweep",
    "figure_trajectories",
    "format_cell",
    "write_csv",
    "write_json",
]


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(cell) for cell in row])
    return _atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def write_json(path: str | Path, payload) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

_FIGSIZE = (6.4, 4.0)
_DPI = 140


def _new_axes(title: str):
    fig = Figure(figsize=_FIGSIZE, dpi=_DPI)
    ax = fig.add_subplot()
    ax.set_title(title)
    ax.grid(True, linewidth=0.4, alpha=0.5)
    return fig, ax


def _save(fig: Figure, path: str | Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None}, bbox_inches="tight")
    return _atomic_write_bytes(path, buf.getvalue())


def figure_allocation(alloc: Allocation, path: str | Path, title: str) -> Path:
    fig, ax = _new_axes(title)
    labels = [str(p) for p in alloc.design_points]
    ax.bar(range(len(labels)), alloc.effective_counts(), color="#4878d0")
    ax.set_xticks(range(len(labels)), labels)
    ax.set_xlabel("design point")
    ax.set_ylabel("samples")
    return _save(fig, path)


def figure_compare(reports: Mapping[str, RegretReport], path: str | Path, title: str) -> Path:
    fig, ax = _new_axes(title)
    names = list(reports.keys())
    means = [reports[n].mean_regret for n in names]
    errs = [reports[n].ci_half_width for n in names]
    ax.bar(range(len(names)), means, yerr=errs, capsize=4,
           color=["#4878d0", "#ee854a", "#6acc64", "#d65f5f"][: len(names)] or None)
    ax.set_xticks(range(len(names)), names)
    ax.set_ylabel("mean regret (95% CI)")
    return _save(fig, path)


def figure_regret_histogram(report: RegretReport, path: str | Path, title: str) -> Path:
    fig, ax = _new_axes(title)
    if report.per_replication is not None and report.per_replication.size:
        ax.hist(report.per_replication, bins=40, color="#4878d0")
        ax.axvline(report.mean_regret, color="#d65f5f", linewidth=1.2, label="mean")
        ax.legend()
    ax.set_xlabel("regret per replication")
    ax.set_ylabel("count")
    return _save(fig, path)


def figure_sweep(sweep: SweepResult, path: str | Path, title: str) -> Path:
    fig, ax = _new_axes(title)
    budgets = list(sweep.axis)
    ax.loglog(budgets, [r.mean_regret for r in sweep.optimized], "o-", label="optimized")
    ax.loglog(budgets, [r.mean_regret for r in sweep.uniform], "s--", label="uniform")
    ax.set_xlabel("budget n")
    ax.set_ylabel("mean regret")
    ax.legend(title=f"log-log slope {sweep.loglog_slope:.2f}")
    return _save(fig, path)


def figure_trajectories(bands: Mapping[str, Mapping[str, np.ndarray]], path: str | Path,
                        title: str) -> Path:
    fig, ax = _new_axes(title)
    colors = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f"]
    for color, (name, band) in zip(colors, bands.items()):
        days = np.arange(band["q50"].size)
        ax.fill_between(days, band["q25"], band["q75"], color=color, alpha=0.25)
        ax.plot(days, band["q50"], color=color, label=f"{name} (median, IQR)")
    ax.set_xlabel("day")
    ax.set_ylabel("cumulative infections")
    ax.legend()
    return _save(fig, path)


def figure_bound_checks(rows: Sequence[tuple], path: str | Path, title: str) -> Path:
    """Scatter of observed regret against the per-draw bound, with the y=x line."""
    fig, ax = _new_axes(title)
    regrets = np.array([row[1] for row in rows], dtype=float)
    bounds = np.array([row[2] for row in rows], dtype=float)
    ax.scatter(bounds, regrets, s=8, alpha=0.5, color="#4878d0")
    lim = max(bounds.max(), regrets.max()) * 1.05 if len(rows) else 1.0
    ax.plot([0.0, lim], [0.0, lim], color="#d65f5f", linewidth=1.0, label="regret = bound")
    ax.set_xlabel("bound")
    ax.set_ylabel("regret")
    ax.legend()
    return _save(fig, path)
