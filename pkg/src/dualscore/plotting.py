"""Figures written next to the delimited report files.

Everything renders with the non-interactive Agg backend straight to disk.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .benchmark import METRICS  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def _panel(ax, hm, title=None):
    extent = [hm.prognostic_axis[0], hm.prognostic_axis[-1], hm.index_axis[0], hm.index_axis[-1]]
    im = ax.imshow(hm.values.T, origin="lower", aspect="auto", extent=extent, cmap="viridis")
    ax.set_xlabel("prognostic score")
    ax.set_ylabel("index - treatment")
    if title:
        ax.set_title(title)
    return im


def heatmap_figure(hm, path, title: str | None = None, truth=None) -> Path:
    """Log-odds surface; ``truth`` (a values array on the same axes) adds a second panel."""
    with plt.rc_context(RC):
        ncols = 1 if truth is None else 2
        fig, axes = plt.subplots(1, ncols, figsize=(3.4 * ncols, 3.0), squeeze=False)
        im = _panel(axes[0, 0], hm, title or "estimated log-odds")
        if truth is not None:
            from .model import Heatmap

            _panel(axes[0, 1], Heatmap(hm.prognostic_axis, hm.index_axis, truth), "truth")
        fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.85)
        return _save(fig, path)


def convergence_figure(table, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.4, 2.6))
        n = np.array([r[0] for r in table.rows], dtype=float)
        mean = np.array([r[1] for r in table.rows])
        std = np.nan_to_num(np.array([r[2] for r in table.rows]))
        ax.errorbar(n, mean, yerr=std, marker="o", capsize=3)
        ax.set_xscale("log")
        ax.set_xlabel("sample size n")
        ax.set_ylabel("link MSE")
        ax.set_title(f"scenario {table.scenario_id}")
        return _save(fig, path)


def benchmark_figure(summary, path) -> Path:
    methods = sorted({k[0] for k in summary})
    sizes = sorted({k[1] for k in summary})
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(METRICS), figsize=(3.2 * len(METRICS), 2.6))
        for ax, metric in zip(axes, METRICS):
            for method in methods:
                stats = [summary[(method, n)][metric] for n in sizes]
                ax.errorbar(sizes, [s[0] for s in stats],
                            yerr=np.nan_to_num([s[1] for s in stats]), marker="o",
                            capsize=3, label=method)
            ax.set_xlabel("n")
            ax.set_title(metric)
        axes[0].legend()
        return _save(fig, path)


def interval_figure(result, path) -> Path:
    """Point estimates with bootstrap intervals, one panel per coefficient vector."""
    with plt.rc_context(RC):
        p = len(result.beta)
        fig, axes = plt.subplots(1, 2, figsize=(6.8, 0.25 * p + 1.2), sharey=True)
        for ax, coefs, label in ((axes[0], result.beta, "beta"), (axes[1], result.xi, "xi")):
            est = np.array([c.estimate for c in coefs])
            lo = np.array([c.low for c in coefs])
            hi = np.array([c.high for c in coefs])
            y = np.arange(p)
            ax.errorbar(est, y, xerr=[np.maximum(est - lo, 0), np.maximum(hi - est, 0)],
                        fmt="o", capsize=2)
            ax.axvline(0.0, color="0.6", lw=0.8)
            ax.set_title(f"{label} ({result.level:.0%} interval)")
        axes[0].set_yticks(np.arange(p), [c.name for c in result.beta])
        return _save(fig, path)
