"""Render figures from a finished run directory.

Post-processing only: reads the delimited outputs and snapshots a run
already wrote and drops PNG files next to them under figures/.  The CSV
files remain the normative record; nothing here feeds back into compute.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import MissingInputError
from .fields import read_snapshot
from .runio import read_monitors_csv

_DPI = 140


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(True, alpha=0.3)


def render_monitors(run_dir: Path, fig_dir: Path) -> list[Path]:
    path = run_dir / "monitors.csv"
    if not path.exists():
        return []
    cols = read_monitors_csv(path)
    t = cols["t"]
    fig, axes = plt.subplots(2, 3, figsize=(12, 6.5))
    axes = axes.ravel()

    axes[0].plot(t, cols["mass"] - 1.0, lw=1.2)
    _style(axes[0], "t", "mass - 1", "mass drift")
    axes[1].plot(t, cols["min_u"], lw=1.2, label="min u")
    axes[1].plot(t, cols["max_u"], lw=1.2, label="max u")
    axes[1].legend(fontsize=8)
    _style(axes[1], "t", "u extrema", "positivity / maximum principle")
    axes[2].plot(t, cols["l2"], lw=1.2)
    _style(axes[2], "t", "|u|_2", "L2 norm")
    axes[3].semilogy(t[1:], np.maximum(cols["h1_energy"][1:], 1e-300), lw=1.2)
    _style(axes[3], "t", "dissipation", "H1 energy of beta_eps(u)")
    if np.any(np.isfinite(cols["entropy"])):
        axes[4].plot(t, cols["entropy"], lw=1.2)
        _style(axes[4], "t", "E(u)", "free energy")
    else:
        axes[4].axis("off")
    finite_res = np.isfinite(cols["residual"])
    if finite_res.any():
        axes[5].semilogy(t[finite_res],
                         np.maximum(cols["residual"][finite_res], 1e-300),
                         lw=1.2)
    _style(axes[5], "t", "relative residual", "solver residual")
    fig.tight_layout()
    out = fig_dir / "monitors.png"
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return [out]


def render_snapshots(run_dir: Path, fig_dir: Path,
                     max_panels: int = 6) -> list[Path]:
    index = run_dir / "snapshots" / "index.csv"
    if not index.exists():
        return []
    with open(index, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows:
        return []
    take = np.linspace(0, len(rows) - 1, min(max_panels, len(rows)))
    picks = sorted({int(round(i)) for i in take})
    fields = [(float(rows[i][1]),
               read_snapshot(run_dir / "snapshots" / rows[i][2]))
              for i in picks]
    ncol = len(fields)
    fig, axes = plt.subplots(1, ncol, figsize=(3.0 * ncol, 3.1))
    if ncol == 1:
        axes = [axes]
    vmax = max(float(f.values.max()) for _, f in fields)
    for ax, (t, f) in zip(axes, fields):
        vals = f.values
        if f.grid.dim == 3:
            vals = vals[:, :, f.grid.n // 2]  # center slice
        im = ax.imshow(vals.T, origin="lower", cmap="viridis",
                       vmin=0.0, vmax=vmax,
                       extent=(0, f.grid.extent[0], 0, f.grid.extent[1]))
        ax.set_title(f"t = {t:.4g}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, shrink=0.85)
    out = fig_dir / "snapshots.png"
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return [out]


def render_h_eps(run_dir: Path, fig_dir: Path) -> list[Path]:
    path = run_dir / "h_eps.csv"
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    data = {}
    for t, eps, h, bound in rows:
        data.setdefault(float(eps), []).append(
            (float(t), float(h), float(bound)))
    fig, ax = plt.subplots(figsize=(6, 4))
    for eps in sorted(data, reverse=True):
        pts = np.array(sorted(data[eps]))
        line, = ax.semilogy(pts[:, 0], np.maximum(pts[:, 1], 1e-300),
                            lw=1.3, label=f"eps = {eps:g}")
        ax.semilogy(pts[:, 0], np.maximum(pts[:, 2], 1e-300), "--", lw=0.9,
                    color=line.get_color(), alpha=0.6)
    _style(ax, "t", "h_eps(t)",
           "gap energy and fitted C sqrt(eps) exp(Ct) bounds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = fig_dir / "h_eps.png"
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return [out]


def render_particle_monitors(run_dir: Path, fig_dir: Path) -> list[Path]:
    path = run_dir / "particle_monitors.csv"
    if not path.exists():
        return []
    cols = read_monitors_csv(path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(cols["t"], cols["kde_mass"] - 1.0, lw=1.2)
    _style(axes[0], "t", "kde mass - 1", "KDE normalization")
    finite = np.isfinite(cols["hm1_distance_to_pde"])
    if finite.any():
        axes[1].semilogy(cols["t"][finite],
                         cols["hm1_distance_to_pde"][finite], "o-", lw=1.2)
        _style(axes[1], "t", "|kde - u|_{-1}", "law matching vs PDE")
    else:
        axes[1].axis("off")
    fig.tight_layout()
    out = fig_dir / "particles.png"
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return [out]


def render_run(run_dir) -> list[Path]:
    """Render every figure the run's outputs support; returns the paths."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingInputError(f"run directory not found: {run_dir}")
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written = []
    written += render_monitors(run_dir, fig_dir)
    written += render_snapshots(run_dir, fig_dir)
    written += render_h_eps(run_dir, fig_dir)
    written += render_particle_monitors(run_dir, fig_dir)
    return written
