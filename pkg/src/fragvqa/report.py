"""Figure rendering for the CLI report paths (written next to the CSV output)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .pipeline import BENCH_STAGES, BenchResult


def save_bench_figure(path, results: Sequence[BenchResult]) -> None:
    """Runtime per stage across inputs (one line per stage plus end-to-end)."""
    labels = [r.label for r in results]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for stage in BENCH_STAGES:
        ax.plot(x, [r.stage_means[stage] for r in results], marker="o", label=stage)
    ax.plot(x, [r.end_to_end for r in results], marker="s", linestyle="--",
            color="black", label="end-to-end")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("mean wall time (s)")
    ax.set_xlabel("input")
    ax.set_title(f"Per-stage runtime (mean of {results[0].repeats} runs)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_figure(path, log) -> None:
    """Train loss and validation RMSE per epoch, with the lr schedule inset."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(log.epoch, log.train_loss, label="train loss", color="tab:blue")
    ax.plot(log.epoch, log.val_rmse, label="val RMSE", color="tab:red")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss / RMSE")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(log.epoch, log.lr, label="lr", color="tab:green", alpha=0.6)
    ax2.set_ylabel("learning rate")
    lines1, labels1 = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines1 + lines2, labels1 + labels2, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_eval_figure(path, repeats) -> None:
    """Distribution of each correlation metric across repeated splits."""
    names = ("srcc", "plcc", "krcc")
    data = [[getattr(r, m) for r in repeats] for m in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot(data)
    ax.set_xticks(range(1, len(names) + 1))
    ax.set_xticklabels([m.upper() for m in names])
    for i, vals in enumerate(data, start=1):
        ax.plot(np.full(len(vals), i), vals, "k.", alpha=0.4, markersize=4)
    ax.set_ylabel("coefficient")
    ax.set_title(f"Metrics over {len(repeats)} repeats (dots: individual runs)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
