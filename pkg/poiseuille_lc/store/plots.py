"""SVG plots of a run; ids and metadata are fixed so reruns give identical files"""
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..diagnostics import EnergyTrace
from ..fields import PhysGrid

logger = logging.getLogger(__name__)

SNAPSHOTS = 5

plt.rcParams.update({
    "svg.hashsalt": "poiseuille-lc",
    "svg.fonttype": "none",
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [6.0, 3.7],
})


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_theta_snapshots(path: Path, grid: PhysGrid) -> Path:
    fig, ax = plt.subplots()
    levels = np.unique(np.linspace(0, len(grid.t) - 1, SNAPSHOTS).round().astype(int))
    for b in levels:
        ax.plot(grid.x, grid.theta[b], label=f"t={grid.t[b]:.3g}")
    ax.set_xlabel("x")
    ax.set_ylabel("theta")
    ax.legend()
    return _save(fig, path)


def plot_energy(path: Path, trace: EnergyTrace) -> Path:
    fig, ax = plt.subplots()
    ax.plot(trace.times, trace.E, label="E(t)")
    ax.plot(trace.times, trace.E + trace.D, label="E(t) + D(t)")
    ax.axhline(trace.E0, color="gray", linestyle="--", linewidth=0.8, label="E(0)")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)


def plot_J_heatmap(path: Path, grid: PhysGrid) -> Path:
    fig, ax = plt.subplots()
    mesh = ax.pcolormesh(grid.x, grid.t, grid.J, shading="auto", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label="J")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    return _save(fig, path)
