"""Figure rendering for reliability diagrams and sweep reports.

Kept separate from the metric computations: metrics produce data, the CLI
report paths call into here to render PNGs next to the JSON/CSV output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bandwidth import BandwidthLaw
from .metrics import ReliabilityData


def plot_reliability(data: ReliabilityData, path, title=None):
    """Render a reliability diagram with per-bin counts on a log axis."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot([0, 1], [0, 1], color="gray", linestyle="--", linewidth=1, label="ideal")
    if data.bins:
        mean_pred = [b.mean_predicted for b in data.bins]
        freq = [b.frequency for b in data.bins]
        counts = [b.count for b in data.bins]
        ax.plot(mean_pred, freq, marker="o", color="C0", label="observed")
        ax2 = ax.twinx()
        ax2.bar(mean_pred, counts, width=0.02, alpha=0.25, color="C1")
        ax2.set_yscale("log")
        ax2.set_ylabel("bin count")
    ax.set_xlabel("mean predicted probability")
    ax.set_ylabel("empirical frequency")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="upper left")
    ax.set_title(title or f"reliability ({data.axis})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_metrics(rows: list, path):
    """Metric curves against calibration-set size (log x axis).

    ``rows`` are dicts containing ``per_class_m`` plus metric columns.
    """
    metric_names = ["accuracy", "ece_adaptive", "cece_adaptive", "brier_top"]
    if rows and "full_calibration_error" in rows[0]:
        metric_names.append("full_calibration_error")
    sizes = [row["per_class_m"] for row in rows]
    n_panels = len(metric_names)
    ncols = 2
    nrows = (n_panels + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 3.0 * nrows))
    for ax, name in zip(np.atleast_1d(axes).ravel(), metric_names):
        ax.plot(sizes, [row[name] for row in rows], marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("calibration points per class")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    for ax in np.atleast_1d(axes).ravel()[n_panels:]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bandwidth_law(pairs: list, law: BandwidthLaw, path):
    """Tuned bandwidths against per-class count with the fitted power law."""
    m_vals = np.array([m for m, _ in pairs], dtype=float)
    b_vals = np.array([b for _, b in pairs], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(m_vals, b_vals, "o", label="tuned")
    grid = np.geomspace(m_vals.min(), m_vals.max(), 50)
    fitted = law.constant * grid ** (-1.0 / (law.dim + 4))
    ax.loglog(
        grid,
        fitted,
        "-",
        label=f"{law.constant:.3g} * m^(-1/{law.dim + 4})",
    )
    ax.set_xlabel("calibration points per class")
    ax.set_ylabel("bandwidth")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
