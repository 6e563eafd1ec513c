"""Report figures rendered straight to image files.

Every function takes an output path and writes one PNG; nothing is shown
interactively, so these are safe in headless runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import QualityCurve


def save_curve_figure(
    path: Path | str,
    curves: Mapping[str, QualityCurve],
    title: str = "Quality ranking",
) -> None:
    """Mean quality of the top N percent, one line per labeled curve."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, curve in curves.items():
        ax.plot(curve.percent, curve.mean_quality, label=f"{label} (AUC {curve.auc:.3f})")
    ax.set_xlabel("top N percent by score")
    ax.set_ylabel("mean quality")
    ax.set_xlim(1, 100)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_figure(
    path: Path | str, rows: Sequence[tuple[str, float]]
) -> None:
    """Horizontal AUC bars, one per cue variant (baselines included)."""
    names = [r[0] for r in rows]
    aucs = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 0.5 * len(rows) + 1.5))
    y = range(len(rows))
    ax.barh(y, aucs, color="#4878a8")
    ax.set_yticks(list(y))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("AUC")
    lo = min(aucs)
    ax.set_xlim(max(0.0, lo - 0.05), 1.0)
    for yi, v in zip(y, aucs):
        ax.text(v, yi, f" {v:.4f}", va="center", fontsize=8)
    ax.set_title("Cue ablations")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_histogram(
    path: Path | str,
    scores: Sequence[float],
    threshold: float | None = None,
) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(list(scores), bins=40, color="#4878a8", edgecolor="white")
    if threshold is not None:
        ax.axvline(threshold, color="#c04040", linestyle="--",
                   label=f"threshold {threshold:.3f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("predicted quality score")
    ax.set_ylabel("reconstructions")
    ax.set_title("Score distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_figure(
    path: Path | str, log: Sequence[tuple[int, float, float]]
) -> None:
    """Loss curve with validation ranking accuracy on a twin axis."""
    epochs = [r[0] for r in log]
    loss = [r[1] for r in log]
    acc = [r[2] for r in log]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(epochs, loss, color="#4878a8", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("ranking loss", color="#4878a8")
    ax2 = ax.twinx()
    ax2.plot(epochs, acc, color="#c08030", label="val accuracy")
    ax2.set_ylabel("val pair accuracy", color="#c08030")
    ax2.set_ylim(0.0, 1.0)
    ax.set_title("Scorer training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
