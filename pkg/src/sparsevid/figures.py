"""Figure rendering for attack and benchmark reports.

Plots are regenerated from the same row/trace data that lands in the JSON
and CSV exports, never from internal state, so a report directory is
self-contained. Rendering is headless (Agg) and safe on machines without a
display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_trace_figure", "render_bench_figures", "render_saliency_figure"]


def render_trace_figure(trace_rows: list[dict], path) -> None:
    """Boundary distance and query consumption across optimizer iterations."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    if trace_rows:
        iterations = [r["iteration"] for r in trace_rows]
        ax.plot(iterations, [r["distance"] for r in trace_rows],
                color="tab:blue", lw=1.8, label="best distance")
        ax.plot(iterations, [r["current_distance"] for r in trace_rows],
                color="tab:blue", lw=0.8, alpha=0.4, label="current distance")
        ax.set_xlabel("iteration")
        ax.set_ylabel("boundary distance", color="tab:blue")
        ax2 = ax.twinx()
        ax2.plot(iterations, [r["queries"] for r in trace_rows],
                 color="tab:red", lw=1.2, label="queries")
        ax2.set_ylabel("queries", color="tab:red")
        ax.legend(loc="upper right", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no optimizer iterations", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_title("direction optimization")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench_figures(variant_reports: dict[str, dict], outdir) -> list[Path]:
    """Comparison figures across benchmark variants.

    One bar chart of the summary metrics (MQ, MAP, sparsity) and one query
    distribution plot with per-sample points.
    """
    outdir = Path(outdir)
    written = []
    variants = list(variant_reports)

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))
    for ax, key, title in zip(axes, ("mq", "map", "s"),
                              ("median queries", "mean abs perturbation", "sparsity")):
        values = [variant_reports[v]["summary"][key] or 0.0 for v in variants]
        ax.bar(range(len(variants)), values, color="tab:blue", width=0.6)
        ax.set_xticks(range(len(variants)))
        ax.set_xticklabels(variants, rotation=15, fontsize=8)
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    summary_path = outdir / "bench_summary.png"
    fig.savefig(summary_path, dpi=120)
    plt.close(fig)
    written.append(summary_path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for i, v in enumerate(variants):
        queries = [row["queries"] for row in variant_reports[v]["rows"]]
        jitter = (np.arange(len(queries)) % 7 - 3) * 0.01
        ax.scatter(np.full(len(queries), i) + jitter, queries, s=14, alpha=0.7)
        if queries:
            ax.hlines(float(np.median(queries)), i - 0.25, i + 0.25, color="black", lw=1.5)
    ax.set_xticks(range(len(variants)))
    ax.set_xticklabels(variants, rotation=15, fontsize=8)
    ax.set_ylabel("queries per attack")
    ax.set_title("query distribution (bar = median)")
    fig.tight_layout()
    dist_path = outdir / "bench_queries.png"
    fig.savefig(dist_path, dpi=120)
    plt.close(fig)
    written.append(dist_path)
    return written


def render_saliency_figure(video, saliency_maps, mask, path, max_frames: int = 8) -> None:
    """Grid of frames: grayscale input, saliency heat map, selected pixels."""
    t = min(video.frames, max_frames)
    fig, axes = plt.subplots(3, t, figsize=(1.6 * t, 5.0), squeeze=False)
    for i in range(t):
        gray = video.data[i].mean(axis=2).T
        axes[0][i].imshow(gray, cmap="gray", origin="lower")
        axes[1][i].imshow(saliency_maps[i].values.T, cmap="inferno", origin="lower")
        axes[2][i].imshow(mask.data[i, :, :, 0].T, cmap="gray", origin="lower",
                          vmin=0.0, vmax=1.0)
        for row in range(3):
            axes[row][i].set_xticks(())
            axes[row][i].set_yticks(())
        axes[0][i].set_title(f"frame {i}", fontsize=8)
    axes[0][0].set_ylabel("input", fontsize=8)
    axes[1][0].set_ylabel("saliency", fontsize=8)
    axes[2][0].set_ylabel("selected", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
