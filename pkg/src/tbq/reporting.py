"""CSV writers and SVG figures for CLI reports."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(path, columns, rows) -> None:
    """Rows are dicts or sequences matching ``columns``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in vals])


def write_kv(path, items) -> None:
    items = items.items() if isinstance(items, dict) else items
    write_table(path, ("key", "value"), list(items))


def read_kv(path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {r["key"]: r["value"] for r in csv.DictReader(fh)}


def write_matrix(path, m) -> None:
    m = np.asarray(m)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([_fmt(v) for v in row])


# ------------------------------------------------------------ figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tbq"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def save_svg(fig, path: Path) -> None:
    # no creation date so identical inputs give identical files
    fig.savefig(path, format="svg", metadata={"Date": None})
    _pyplot().close(fig)


def plot_fringe(path, theta, curves: dict, fits: dict | None = None) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    grid = np.linspace(min(theta), max(theta), 400)
    for label, y in curves.items():
        line = ax.plot(theta, y, "o", ms=3, label=label)[0]
        if fits and label in fits:
            f = fits[label]
            ax.plot(grid, f.offset + f.amplitude * np.cos(grid + f.phase), "-", color=line.get_color(), lw=1)
    ax.set_xlabel("theta_A (rad)")
    ax.set_ylabel("coincidences")
    ax.legend(fontsize=7)
    fig.tight_layout()
    save_svg(fig, path)


def plot_matrix(path, rho) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.2))
    labels = ["00", "01", "10", "11"]
    for ax, part, title in zip(axes, (rho.real, rho.imag), ("Re rho", "Im rho")):
        im = ax.imshow(part, vmin=-0.5, vmax=0.5, cmap="RdBu_r")
        ax.set_xticks(range(4), labels)
        ax.set_yticks(range(4), labels)
        ax.set_title(title)
    fig.colorbar(im, ax=axes, shrink=0.8)
    save_svg(fig, path)


def plot_series(path, x, series: dict, xlabel: str, ylabel: str, logy: bool = False, logx: bool = False) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in series.items():
        ax.plot(x, y, "o-", ms=3, label=label)
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    save_svg(fig, path)
