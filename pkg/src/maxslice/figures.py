"""Optional PNG rendering of diagnostics.csv and rates.csv.

The CSV files are the contract; these figures are a convenience for a quick
look at a run.  matplotlib is imported lazily with the Agg backend so the
library never needs a display.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

STYLE = {
    "font.size": 9.0,
    "axes.linewidth": 0.8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "lines.markersize": 3.0,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

# column groups drawn on a shared panel
PANELS = (
    ("constraints", ("ham_norm", "mom_norm_1", "mom_norm_2", "mom_norm_3")),
    ("mean curvature", ("trk_l2", "trk_max")),
    ("spacetime curvature", ("ricci_ij_norm", "ricci_00_norm", "ricci_0i_norm",
                             "einstein_norm", "gtilde_norm")),
    ("energies", ("energy_k", "energy_total", "c_bd")),
    ("boundary residuals", ("bc_khat", "bc_knn", "bc_kna", "bc_kcc")),
)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _read(path: Path):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, ndmin=1)
    return data


def _semilogy(ax, x, y, label):
    y = np.abs(np.asarray(y, dtype=float))
    if np.any(y > 0):
        with warnings.catch_warnings():
            # columns that are zero at most output times trip the log autoscaler
            warnings.filterwarnings("ignore", message="Data has no positive values")
            ax.semilogy(x, np.where(y > 0, y, np.nan), marker=".", label=label)
    else:
        ax.plot(x, y, marker=".", label=label)


def plot_diagnostics(csv_path, out_dir=None) -> Path:
    """One multi-panel figure of every diagnostics column against t."""
    plt = _pyplot()
    csv_path = Path(csv_path)
    out = Path(out_dir or csv_path.parent) / "diagnostics.png"
    data = _read(csv_path)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(PANELS), 1, figsize=(5.5, 2.0 * len(PANELS)), sharex=True)
        for ax, (title, cols) in zip(axes, PANELS):
            for c in cols:
                _semilogy(ax, data["t"], data[c], c)
            ax.set_title(title, loc="left")
            ax.legend(loc="best")
        axes[-1].set_xlabel("t")
        fig.savefig(out)
        plt.close(fig)
    return out


def plot_rates(csv_path, out_dir=None) -> Path:
    """Error against level for each quantity of a convergence suite."""
    plt = _pyplot()
    csv_path = Path(csv_path)
    out = Path(out_dir or csv_path.parent) / "rates.png"
    rows = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=None, encoding="utf-8",
                         ndmin=1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        for q in dict.fromkeys(rows["quantity"]):
            sel = rows[rows["quantity"] == q]
            ax.loglog(sel["n3"] - 1, sel["error"], marker="o", label=str(q))
        ax.set_xlabel("normal cells")
        ax.set_ylabel("max error")
        ax.legend(loc="best")
        fig.savefig(out)
        plt.close(fig)
    return out
