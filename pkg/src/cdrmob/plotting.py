"""Optional figure rendering; needs the ``plot`` extra (matplotlib)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise RuntimeError("plotting needs matplotlib; install the 'plot' extra") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed metadata keeps repeated renders byte-identical
    plt.rcParams["svg.hashsalt"] = "cdrmob"
    return plt


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else {"Date": None})


def density_figure(table, path: str | Path) -> None:
    plt = _pyplot()
    fig, (ax_h, ax_d) = plt.subplots(1, 2, figsize=(11, 4))
    hours = np.arange(24)
    for i, name in enumerate(table.sectors):
        ax_h.plot(hours, table.hour_ratio[i], marker="o", ms=3, label=name)
        ax_d.plot(np.arange(len(table.days)), table.day_ratio[i], marker="o", ms=3, label=name)
    ax_h.set(xlabel="hour of day", ylabel="share of activity", xticks=range(0, 24, 3))
    ax_d.set(xlabel="day", ylabel="share of activity")
    ax_d.set_xticks(range(len(table.days)), [d.strftime("%d %b") for d in table.days], rotation=60)
    ax_h.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def distribution_figure(curves: Sequence[tuple[str, object, object]], xlabel: str, path: str | Path) -> None:
    """``curves`` holds ``(label, EmpiricalDistribution, DistributionFit | None)``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, dist, fit in curves:
        ok = dist.density > 0
        line = ax.plot(dist.centers[ok], dist.density[ok], "o", ms=3, label=label)[0]
        if fit is not None:
            grid = np.geomspace(max(dist.edges[0], fit.x_min or dist.edges[0]),
                                min(dist.edges[-1], fit.x_max), 200)
            ax.plot(grid, fit.pdf(grid), "-", color=line.get_color(), lw=1)
    ax.set(xscale="log", yscale="log", xlabel=xlabel, ylabel="probability density")
    if len(curves) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def series_figure(days, values: np.ndarray, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(days)), values, marker="o")
    ax.set_xticks(range(len(days)), [d.strftime("%d %b") for d in days], rotation=60)
    ax.set(ylabel="mean r_g (m)")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def trajectory_figure(raw, scaled, path: str | Path) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2 if scaled is not None else 1, figsize=(10 if scaled is not None else 5, 4.5))
    axes = np.atleast_1d(axes)
    axes[0].plot(raw.x, raw.y, "-o", ms=3, lw=0.6)
    axes[0].set(xlabel="x (m)", ylabel="y (m)", aspect="equal")
    if scaled is not None:
        axes[1].plot(scaled.x, scaled.y, "-o", ms=3, lw=0.6)
        axes[1].set(xlabel="x / sigma_x", ylabel="y / sigma_y", aspect="equal")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
