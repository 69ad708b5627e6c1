"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
}

BASIS_COLOR = {"K": "#1f77b4", "C": "#d62728"}


def figure_path(out: str | Path, suffix: str = "") -> Path:
    p = Path(out)
    return p.with_name(p.stem + suffix + ".png")


def plot_qber_series(samples, summary, path: str | Path) -> Path:
    """Per-bin QBER (percent) against hours, with binomial error bars and the run mean."""
    valid = [s for s in samples if s.qber is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if valid:
            t = np.array([s.bin_start for s in valid]) / 3600.0
            q = np.array([s.qber for s in valid]) * 100
            e = np.array([s.std for s in valid]) * 100
            color = BASIS_COLOR.get(summary.basis, "k")
            ax.errorbar(t, q, yerr=e, fmt=".", ms=2, lw=0.5, color=color, label=f"basis {summary.basis}")
            if summary.mean_qber is not None:
                ax.axhline(summary.mean_qber * 100, color="k", lw=0.8, ls="--",
                           label=f"mean {summary.mean_qber * 100:.3f}%")
            ax.legend(loc="upper right")
        ax.set_xlabel("time [h]")
        ax.set_ylabel("QBER [%]")
        ax.set_title(f"{summary.encoder}, seed {summary.seed}")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_sweep(key: str, values: Sequence[str], summaries, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            x = [float(v) for v in values]
        except ValueError:
            x = list(range(len(values)))
            ax.set_xticks(x, values)
        y = [np.nan if s.pooled_qber is None else s.pooled_qber * 100 for s in summaries]
        err = [0 if s.pooled_std is None else s.pooled_std * 100 for s in summaries]
        ax.errorbar(x, y, yerr=err, fmt="o-", ms=3, lw=1)
        ax.set_xlabel(key)
        ax.set_ylabel("pooled QBER [%]")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_comparison(rows, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        names = [r.encoder for r in rows]
        x = np.arange(len(rows))
        for k, (attr, basis) in enumerate((("q_k", "K"), ("q_c", "C"))):
            vals = [np.nan if getattr(r, attr) is None else getattr(r, attr) * 100 for r in rows]
            ax.bar(x + (k - 0.5) * 0.38, vals, 0.38, color=BASIS_COLOR[basis], label=f"Q_{basis}")
        ax.set_xticks(x, names, rotation=15)
        ax.set_yscale("log")
        ax.set_ylabel("QBER [%]")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
