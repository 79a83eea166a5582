"""Matplotlib renderings of suite reports and training histories."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from graphodex.aggregate import METHODS
from graphodex.errors import IOFailure
from graphodex.experiments import METHOD_LABELS

_BAR_COLORS = {"majority_vote": "#4878cf", "average_softmax": "#ee854a"}


def render_suite_figures(reports, out_dir: str | Path) -> dict[str, Path]:
    """Write the accuracy bar chart and per-fold spread plot as PNGs."""
    out_dir = Path(out_dir)
    paths = {
        "accuracy": out_dir / "accuracy_by_config.png",
        "folds": out_dir / "fold_accuracies.png",
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _accuracy_bars(reports, paths["accuracy"])
        _fold_spread(reports, paths["folds"])
    except OSError as exc:
        raise IOFailure(f"cannot write figures to {out_dir}: {exc}") from exc
    return paths


def _config_labels(reports) -> list[str]:
    return [f"{r.train_label}→{r.test_label}" for r in reports]


def _accuracy_bars(reports, path: Path) -> None:
    labels = _config_labels(reports)
    x = np.arange(len(reports))
    width = 0.38
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for i, method in enumerate(METHODS):
        avgs = [100 * r.stats[method]["avg"] for r in reports]
        lo = [100 * (r.stats[method]["avg"] - r.stats[method]["min"]) for r in reports]
        hi = [100 * (r.stats[method]["max"] - r.stats[method]["avg"]) for r in reports]
        ax.bar(
            x + (i - 0.5) * width,
            avgs,
            width,
            yerr=[lo, hi],
            capsize=3,
            label=METHOD_LABELS[method],
            color=_BAR_COLORS[method],
        )
    ax.set_xticks(x, labels)
    ax.set_ylabel("Form-level accuracy (%)")
    ax.set_ylim(0, 105)
    ax.axhline(50, color="gray", linestyle=":", linewidth=1)
    ax.legend(loc="lower right")
    ax.set_title("Cross-validated accuracy per configuration (bars: fold min/max)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fold_spread(reports, path: Path) -> None:
    labels = _config_labels(reports)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for i, rep in enumerate(reports):
        for j, method in enumerate(METHODS):
            accs = np.asarray(rep.fold_accuracies[method]) * 100
            jitter = (j - 0.5) * 0.3
            ax.plot(
                np.full(accs.shape, i + jitter),
                accs,
                "o",
                alpha=0.55,
                markersize=5,
                color=_BAR_COLORS[method],
                label=METHOD_LABELS[method] if i == 0 else None,
            )
    ax.set_xticks(range(len(reports)), labels)
    ax.set_ylabel("Fold accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend(loc="lower right")
    ax.set_title("Per-fold form-level accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_history_figure(history, path: str | Path) -> Path:
    """Loss and accuracy curves for one training run."""
    path = Path(path)
    epochs = np.arange(1, len(history.train_loss) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(epochs, history.train_loss, color="#4878cf")
    ax1.set_xlabel("Epoch")
    ax1.set_ylabel("Train loss")
    ax2.plot(epochs, history.train_accuracy, label="train", color="#4878cf")
    val = [(e, a) for e, a in zip(epochs, history.val_accuracy) if a is not None]
    if val:
        ax2.plot([e for e, _ in val], [a for _, a in val], label="validation",
                 color="#ee854a")
    ax2.set_xlabel("Epoch")
    ax2.set_ylabel("Accuracy")
    ax2.set_ylim(0, 1.02)
    ax2.legend(loc="lower right")
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise IOFailure(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path
