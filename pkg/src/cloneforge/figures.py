"""Matplotlib rendering for report artifacts.

Every CLI report path writes machine-readable CSV/JSON and, through
these helpers, PNG figures next to them: norm histograms with the
operating threshold marked, the distribution of per-anchor operating
parameters, and the threshold-perturbation curves.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def norm_histogram(
    pos_norms: np.ndarray,
    corpus_norms: np.ndarray,
    tau: float,
    path: str | Path,
    bins: int = 32,
) -> None:
    """Clone-norm vs corpus-norm histogram with the threshold line."""
    high = float(max(pos_norms.max(), corpus_norms.max()))
    edges = np.linspace(0.0, high, bins + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(pos_norms, bins=edges, alpha=0.6, label="clones", color="tab:green")
    ax.hist(corpus_norms, bins=edges, alpha=0.6, label="corpus", color="tab:gray")
    ax.axvline(tau, color="tab:red", linestyle="--", label=f"threshold ({tau:.3f})")
    ax.set_xlabel("latent norm")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def parameter_histograms(mus: list[float], ms: list[float], mu_path: str | Path, m_path: str | Path) -> None:
    for values, label, path in ((mus, "mu", mu_path), (ms, "m", m_path)):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(values, bins=min(20, max(5, len(values) // 2)), color="tab:blue", alpha=0.8)
        ax.set_xlabel(label)
        ax.set_ylabel("anchors")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def calibration_curves(rows: list[tuple[float, float, float, float]], path: str | Path) -> None:
    """Precision/recall/F1 against the threshold perturbation."""
    deltas = [r[0] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharex=True)
    for ax, idx, label in zip(axes, (3, 1, 2), ("F1", "precision", "recall")):
        series = [r[idx] for r in rows]
        ax.plot(deltas, series, marker="o", markersize=3)
        if label == "F1":
            k = int(np.argmax(series))
            ax.scatter([deltas[k]], [series[k]], color="tab:red", zorder=3, label="max")
            ax.legend()
        ax.set_xlabel("threshold offset")
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
