"""SVG figures for the command-line reports (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp, so repeated runs write identical files
matplotlib.rcParams["svg.hashsalt"] = "dislocscale"
matplotlib.rcParams["svg.fonttype"] = "none"


def line_plot(
    path: Path,
    series: Sequence[tuple],
    *,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    logx: bool = False,
    logy: bool = False,
    markers: bool = False,
) -> Path:
    """One axes with a polyline per (x, y, label) entry, saved as SVG."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for x, y, label in series:
        ax.plot(x, y, marker="o" if markers else None, ms=3, lw=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(s[2] for s in series):
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def convergence_plot(path: Path, params, errors, *, xlabel: str, title: str = "") -> Path:
    return line_plot(path, [(params, errors, "sup error")], xlabel=xlabel, ylabel="error", title=title, logx=True, logy=True, markers=True)
