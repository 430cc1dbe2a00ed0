"""Training-curve and cross-validation figures written next to the TSV reports."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 6.4

params = {
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}


def _new(nrows=1, ncols=1, height_scale=1.0):
    with plt.rc_context(params):
        fig, axes = plt.subplots(
            nrows, ncols, figsize=(fig_width, fig_width * golden_mean * height_scale)
        )
    return fig, axes


def plot_history(history, path, metric_name="dev score"):
    """Two panels: mean train loss per sentence, and the dev metric, by epoch."""
    epochs = [h["epoch"] for h in history]
    losses = [h["train_loss"] for h in history]
    scores = [(h["epoch"], h["dev_score"]) for h in history if h.get("dev_score") is not None]
    with plt.rc_context(params):
        fig, (ax_loss, ax_dev) = _new(1, 2, height_scale=0.7)
        ax_loss.plot(epochs, losses, marker="o", color="#2b8cbe")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss / sentence")
        if scores:
            ax_dev.plot([e for e, _ in scores], [s for _, s in scores], marker="o", color="#e34a33")
            best = max(scores, key=lambda es: es[1])
            ax_dev.axvline(best[0], color="0.6", linestyle="--", linewidth=0.8)
        else:
            ax_dev.text(0.5, 0.5, "no dev set", ha="center", va="center", transform=ax_dev.transAxes)
        ax_dev.set_xlabel("epoch")
        ax_dev.set_ylabel(metric_name)
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)


def plot_crossval(fold_scores, path, metric_name="score"):
    """Bar per fold with the mean drawn across."""
    with plt.rc_context(params):
        fig, ax = _new(height_scale=0.7)
        xs = list(range(1, len(fold_scores) + 1))
        ax.bar(xs, fold_scores, color="#7bccc4", edgecolor="#08589e")
        mean = sum(fold_scores) / len(fold_scores)
        ax.axhline(mean, color="#e34a33", linestyle="--", label=f"mean {mean:.4f}")
        ax.set_xticks(xs)
        ax.set_xlabel("fold")
        ax.set_ylabel(metric_name)
        lo = min(fold_scores)
        ax.set_ylim(max(0.0, lo - 0.1 * (1.0 - lo + 1e-3) - 0.05), 1.0)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)
