"""SVG figure writers for trace and sweep data (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.lines import Line2D

__all__ = ["plot_sweep", "plot_trace"]

_SELECTED_COLOR = "#34618d"
_REJECTED_COLOR = "#c2502f"


def plot_trace(trace, path) -> None:
    """Per-particle cost evolution on a log axis.

    Selected rows are drawn solid and saturated, rejected rows thin and
    faded, with one legend entry per class.
    """
    steps = np.asarray(trace.steps)
    costs = np.asarray(trace.costs, dtype=float)
    sel = np.asarray(trace.selected, dtype=bool)
    # log axis: clip exact zeros to a display floor
    floor = 1e-12
    costs = np.maximum(costs, floor)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if np.any(~sel):
        ax.plot(steps, costs[:, ~sel], color=_REJECTED_COLOR, lw=0.6, alpha=0.35)
    if np.any(sel):
        ax.plot(steps, costs[:, sel], color=_SELECTED_COLOR, lw=0.9, alpha=0.55)
    ax.set_yscale("log")
    ax.set_xlabel("optimization step")
    ax.set_ylabel("cost")
    ax.set_title(f"cost evolution ({int(np.count_nonzero(sel))} selected, "
                 f"{int(np.count_nonzero(~sel))} rejected)")
    ax.legend(
        handles=[
            Line2D([], [], color=_SELECTED_COLOR, lw=1.6, label="selected"),
            Line2D([], [], color=_REJECTED_COLOR, lw=1.6, label="rejected"),
        ],
        loc="upper right",
    )
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep(grid, path) -> None:
    """Success-rate and mean-time heatmaps over the (n, m) grid.

    Skipped cells stay blank; every evaluated cell is annotated with its
    value so the SVG doubles as a table.
    """
    n_values = list(grid.n_values)
    m_values = list(grid.m_values)
    rate = np.full((len(m_values), len(n_values)), np.nan)
    tms = np.full((len(m_values), len(n_values)), np.nan)
    for c in grid.cells:
        i, j = m_values.index(c.m), n_values.index(c.n)
        rate[i, j] = c.success_rate
        tms[i, j] = c.mean_ms

    fig, axes = plt.subplots(1, 2, figsize=(10.5, 4.2))
    panels = ((axes[0], rate, "success rate"), (axes[1], tms, "mean time [ms]"))
    for ax, data, label in panels:
        im = ax.imshow(data, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(n_values)))
        ax.set_xticklabels(str(v) for v in n_values)
        ax.set_yticks(range(len(m_values)))
        ax.set_yticklabels(str(v) for v in m_values)
        ax.set_xlabel("sampling batch n")
        ax.set_ylabel("optimization batch m")
        ax.set_title(f"{label} ({grid.trials} trials/cell)")
        fig.colorbar(im, ax=ax)
        for (i, j), v in np.ndenumerate(data):
            if np.isfinite(v):
                ax.text(j, i, f"{v:.3g}", ha="center", va="center",
                        fontsize=8, color="white")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
