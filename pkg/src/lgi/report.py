"""Figure rendering for training runs and evaluation reports.

Figures are written next to the delimited output (CSV/JSONL) of the same
run: loss curves for training, a tIoU histogram for evaluation, and
temporal/query attention examples for qualitative inspection.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curves(history, path) -> Path:
    """Per-epoch loss terms on the left axis, validation R@0.5 on the right."""
    path = Path(path)
    epochs = [log.epoch for log in history]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(epochs, [log.total for log in history], label="total", color="black", lw=1.8)
    ax.plot(epochs, [log.l_reg for log in history], label="regression", lw=1.2)
    ax.plot(epochs, [log.l_tag for log in history], label="attention guide", lw=1.2)
    ax.plot(epochs, [log.l_dqa for log in history], label="distinctness", lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [log.val_recall_05 for log in history],
             label="val R@0.5", color="tab:red", ls="--", lw=1.4)
    ax2.set_ylabel("val R@0.5 (%)", color="tab:red")
    ax2.tick_params(axis="y", labelcolor="tab:red")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_tiou_histogram(tious, path, thresholds=(0.3, 0.5, 0.7)) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.8))
    ax.hist(tious, bins=np.linspace(0, 1, 26), color="tab:blue", alpha=0.8)
    for tau in thresholds:
        ax.axvline(tau, color="tab:red", ls="--", lw=1)
    ax.set_xlabel("tIoU")
    ax.set_ylabel("samples")
    ax.set_title(f"tIoU distribution (n={len(tious)}, mean={np.mean(tious):.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_attention_example(path, temporal_attention, gt, pred,
                           query_attention=None, tokens=None, video_id="") -> Path:
    """One sample: temporal attention with GT/pred spans, plus the
    word-by-step query attention map when available."""
    path = Path(path)
    rows = 2 if query_attention is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(7, 2.6 * rows), squeeze=False)
    ax = axes[0][0]
    t = len(temporal_attention)
    centers = (np.arange(t) + 0.5) / t
    ax.bar(centers, temporal_attention, width=0.9 / t, color="tab:blue", alpha=0.85)
    ax.axvspan(gt[0], gt[1], color="tab:green", alpha=0.18, label="ground truth")
    ax.axvspan(pred[0], pred[1], color="tab:red", alpha=0.18, label="prediction")
    ax.set_xlim(0, 1)
    ax.set_xlabel("normalized time")
    ax.set_ylabel("attention")
    ax.legend(fontsize=8, loc="upper right")
    if video_id:
        ax.set_title(video_id, fontsize=9)
    if query_attention is not None:
        qax = axes[1][0]
        im = qax.imshow(np.asarray(query_attention).T, aspect="auto",
                        cmap="viridis", vmin=0.0)
        qax.set_xlabel("query word")
        qax.set_ylabel("phrase step")
        if tokens:
            qax.set_xticks(range(len(tokens)))
            qax.set_xticklabels(tokens, rotation=45, ha="right", fontsize=8)
        fig.colorbar(im, ax=qax, fraction=0.03)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
