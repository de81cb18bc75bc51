"""Report figures, rendered off-screen straight to image files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .synth import SweepResult

CONVENTIONAL_COLOR = "tab:orange"
CALIBRATED_COLOR = "tab:green"
CLASS_COLORS = ("tab:blue", "tab:red")


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_sweep(result: SweepResult, path, calibrated_boundaries=(), title: str = "") -> Path:
    """Accuracy against the binary decision threshold."""
    fig = Figure(figsize=(6.0, 3.8), layout="constrained")
    ax = fig.add_subplot()
    ax.plot(result.thresholds, result.accuracies, marker=".", color="black", lw=1)
    ax.axvline(0.5, ls="--", color=CONVENTIONAL_COLOR, label="conventional (0.5)")
    for i, b in enumerate(calibrated_boundaries):
        ax.axvline(b, ls="--", color=CALIBRATED_COLOR, label="calibrated" if i == 0 else None)
    t_best, a_best = result.best()
    ax.scatter([t_best], [a_best], color="tab:purple", zorder=3, label=f"best {a_best:.3f}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("threshold on P(positive)")
    ax.set_ylabel("accuracy")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower left", fontsize="small")
    return _save(fig, path)


def plot_prediction_distribution(
    logits, gold, path, calibrated_boundaries=(), bins: int = 40, title: str = ""
) -> Path:
    """Histogram of P(positive) per gold class with both decision boundaries."""
    logits = np.asarray(logits, dtype=np.float64)
    gold = np.asarray(gold)
    p_pos = 1.0 / (1.0 + np.exp(logits[:, 0] - logits[:, 1]))
    fig = Figure(figsize=(6.0, 3.8), layout="constrained")
    ax = fig.add_subplot()
    edges = np.linspace(0.0, 1.0, bins + 1)
    for label, name in ((0, "negative"), (1, "positive")):
        ax.hist(p_pos[gold == label], bins=edges, alpha=0.55, color=CLASS_COLORS[label], label=name)
    ax.axvline(0.5, ls="--", color=CONVENTIONAL_COLOR, label="conventional")
    for i, b in enumerate(calibrated_boundaries):
        ax.axvline(b, ls="--", color=CALIBRATED_COLOR, label="calibrated" if i == 0 else None)
    ax.set_xlim(0, 1)
    ax.set_xlabel("P(positive)")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_confusion(matrix, path, title: str = "") -> Path:
    mat = np.asarray(matrix)
    n = mat.shape[0]
    fig = Figure(figsize=(1.2 + 0.5 * n, 1.0 + 0.5 * n), layout="constrained")
    ax = fig.add_subplot()
    ax.imshow(mat, cmap="Blues")
    if n <= 15:
        for i in range(n):
            for j in range(n):
                ax.text(j, i, str(mat[i, j]), ha="center", va="center", fontsize="small")
    ticks = np.arange(n)
    ax.set_xticks(ticks, [str(t + 1) for t in ticks])
    ax.set_yticks(ticks, [str(t + 1) for t in ticks])
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    if title:
        ax.set_title(title)
    return _save(fig, path)
