"""SVG figures for the report commands.

Figures are written with a fixed hash salt and no date stamp so that
repeated runs give byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "svg.hashsalt": "dualnest",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 0.8,
    "figure.dpi": 100,
}

MARK_COLORS = {"C": "#b2182b", "S": "#f4a582", "O": "#d1e5f0", "U": "#7f7f7f"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def _xy(z):
    z = np.asarray(z, dtype=complex)
    return z.real, z.imag


def rays_figure(rays, equipotentials, path, landing=None):
    """rays: list of (label, samples); equipotentials: list of sample arrays."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 5))
        for z in equipotentials:
            x, y = _xy(np.append(z, z[:1]))
            ax.plot(x, y, color="0.6", lw=0.5)
        for label, z in rays:
            x, y = _xy(z)
            ax.plot(x, y, lw=0.9, label=label)
        if landing:
            pts = np.array([p for p in landing if p is not None], dtype=complex)
            if len(pts):
                ax.plot(pts.real, pts.imag, "k.", ms=4)
        ax.set_aspect("equal")
        ax.set_xlabel("Re z")
        ax.set_ylabel("Im z")
        if len(rays) <= 12:
            ax.legend(loc="upper right", fontsize=7, frameon=False)
        return _save(fig, path)


def puzzle_figure(puzzle, depths, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 5))
        cmap = plt.get_cmap("viridis")
        top = max(depths) if depths else 0
        for d in depths:
            color = cmap(d / max(top, 1))
            for piece in puzzle.levels[d]:
                x, y = _xy(np.append(piece.boundary, piece.boundary[:1]))
                ax.plot(x, y, color=color, lw=0.4 if not piece.contains_critical else 1.0)
        c = puzzle.param.c
        ax.plot([0], [0], "k+", ms=6)
        ax.plot([c.real], [c.imag], "kx", ms=5)
        ax.set_aspect("equal")
        ax.set_title(f"puzzle, depths 0-{top}")
        return _save(fig, path)


def tableau_figure(tableau, path):
    codes = tableau.codes
    lookup = {ch: i for i, ch in enumerate("CSOU")}
    grid = np.vectorize(lookup.get)(codes)
    with plt.rc_context(STYLE):
        from matplotlib.colors import ListedColormap
        fig, ax = plt.subplots(figsize=(max(4, codes.shape[1] * 0.15), max(3, codes.shape[0] * 0.15)))
        ax.imshow(grid, cmap=ListedColormap([MARK_COLORS[c] for c in "CSOU"]), vmin=0, vmax=3,
                  interpolation="nearest", aspect="auto")
        ax.set_xlabel("orbit index j")
        ax.set_ylabel("depth d")
        return _save(fig, path)


def divergence_figure(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        if report.batches:
            k = np.arange(1, len(report.batches) + 1)
            sums = np.array([float(b.batch_sum) for b in report.batches])
            ax.bar(k, sums, color="0.75", label="batch sum")
            ax.plot(k, np.cumsum(sums), "o-", color="#b2182b", ms=3, label="running total")
            if report.M0 is not None:
                ax.plot(k, k * float(report.M0) / 2, "--", color="k", lw=0.7, label="k M0 / 2")
            ax.set_xticks(k, [f"m={b.outer_generation}" for b in report.batches])
            ax.legend(frameon=False, fontsize=7)
        ax.set_xlabel("batch")
        ax.set_ylabel("modulus")
        return _save(fig, path)


def modulus_figure(region, estimate, path):
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 3.2))
        for curve, color in ((region.outer, "k"), (region.inner, "#b2182b")):
            x, y = _xy(np.append(curve, curve[:1]))
            a.plot(x, y, color=color)
        for p in estimate.pinch_points:
            a.plot([p.real], [p.imag], "o", mfc="none", mec="#2166ac", ms=6)
        a.set_aspect("equal")
        a.set_title("region")
        if estimate.refinement_history:
            n, v = zip(*estimate.refinement_history)
            b.semilogx(n, v, "o-", ms=3, base=2)
        b.set_xlabel("grid N")
        b.set_ylabel("modulus")
        b.set_title("refinement")
        return _save(fig, path)
