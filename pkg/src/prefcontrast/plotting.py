"""Bar charts for the behavioural diagnostics."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    "svg.hashsalt": "prefcontrast",
}


def figsize(scale: float = 1.0, ratio: float | None = None):
    width = 5.5 * scale
    ratio = ratio if ratio is not None else (math.sqrt(5.0) - 1.0) / 2.0
    return width, width * ratio


def bar_chart(names, values, path, ylabel: str, reference: float | None = None, title: str = ""):
    """Save a bar per policy; ``reference`` draws a dashed horizontal line."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        shown = [0.0 if v is None or math.isnan(v) else v for v in values]
        colors = ["tab:blue" if n == "safe" else "tab:gray" if n.startswith("rand") else "tab:orange"
                  for n in names]
        ax.bar(range(len(names)), shown, color=colors)
        for i, v in enumerate(values):
            if v is None or math.isnan(v):
                ax.annotate("n/a", (i, 0), ha="center", va="bottom", fontsize=7)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=60, ha="right")
        ax.set_ylabel(ylabel)
        if reference is not None:
            ax.axhline(reference, color="k", linestyle="--", linewidth=0.8)
        ax.axhline(0.0, color="k", linewidth=0.5)
        if title:
            ax.set_title(title)
        fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
        plt.close(fig)
    return path
