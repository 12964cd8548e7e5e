"""Figure rendering for the report path.

Every figure is rendered to a file next to the delimited output it mirrors;
nothing here opens a window (Agg backend only).
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_histograms(hists: dict, path: str | Path, cutoffs: dict | None = None) -> Path:
    """Grid of per-method score histograms.

    ``hists`` maps method_id -> [(bin_low, bin_high, count), ...];
    ``cutoffs`` optionally maps method_id -> {rule: cutoff} for marker lines.
    """
    if not hists:
        raise ValueError("no histograms to render")
    n = len(hists)
    ncols = min(2, n)
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(6.4 * ncols, 3.2 * nrows), squeeze=False)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    styles = {"MEAN": ("solid", "tab:orange"), "MEAN_MINUS_2SIGMA": ("dashed", "tab:red")}
    for ax, (mid, rows) in zip(axes.flat, sorted(hists.items())):
        lows = [r[0] for r in rows]
        widths = [r[1] - r[0] for r in rows]
        counts = [r[2] for r in rows]
        ax.bar(lows, counts, width=widths, align="edge", color="tab:blue", alpha=0.8)
        for rule, cut in sorted((cutoffs or {}).get(mid, {}).items()):
            ls, color = styles.get(rule, ("dotted", "gray"))
            ax.axvline(cut, linestyle=ls, color=color, linewidth=1.2, label=f"{rule}={cut:.3f}")
        ax.set_title(mid, fontsize=10)
        ax.set_xlabel("change score (cosine)")
        ax.set_ylabel("words")
        if cutoffs and cutoffs.get(mid):
            ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(reports, path: str | Path) -> Path:
    """Two-panel summary: anchor stability per method, then the other metrics."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to render")
    reports = sorted(reports, key=lambda r: r.method_id)
    ids = [r.method_id for r in reports]
    x = range(len(reports))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6.0 + 1.3 * len(reports), 4.2))

    ax1.bar(x, [r.cs_avg_sw for r in reports], color="tab:blue")
    ax1.set_xticks(list(x), ids, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("average anchor cosine")
    ax1.set_title("stability over stopword anchors")

    metrics = [
        ("acc_mean", "tab:blue"),
        ("acc_2sigma", "tab:cyan"),
        ("mu_rank", "tab:gray"),
        ("recall_p", "tab:orange"),
        ("recall_k", "tab:red"),
    ]
    width = 0.8 / len(metrics)
    for j, (name, color) in enumerate(metrics):
        xs = [i + (j - (len(metrics) - 1) / 2) * width for i in x]
        ax2.bar(xs, [getattr(r, name) for r in reports], width=width, color=color, label=name)
    ax2.set_xticks(list(x), ids, rotation=30, ha="right", fontsize=8)
    ax2.set_ylim(0, 1.05)
    ax2.set_title("detection metrics")
    ax2.legend(fontsize=7)

    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
