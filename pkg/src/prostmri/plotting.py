"""Figures written next to the delimited reports.

Everything renders with the Agg backend and without the software-version
PNG metadata, so figure bytes depend only on the plotted data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .metrics import roc_curve  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.dpi": 120,
    "svg.hashsalt": "prostmri",
}

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def roc_figure(curves, path, title="Held-out test ROC"):
    """``curves``: iterable of (label, outputs, labels). Single-class entries are skipped."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        ax.plot([0, 1], [0, 1], ls=":", color="0.6", lw=1)
        for name, outputs, labels in curves:
            labels = np.asarray(labels)
            if labels.min() == labels.max():
                continue
            fpr, tpr, _ = roc_curve(outputs, labels)
            ax.plot(fpr, tpr, drawstyle="steps-post", label=name)
        ax.set_xlim(-0.01, 1.01)
        ax.set_ylim(-0.01, 1.01)
        ax.set_xlabel("1 - specificity")
        ax.set_ylabel("Sensitivity")
        ax.set_title(title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def reader_figure(table, path, ai=None):
    """Grouped bars of per-reader sensitivity/specificity, optional AI row."""
    rows = [(rid, ms) for rid, _, ms in table.readers] + [("Mean", table.mean)]
    if ai is not None:
        rows.append(("AI", ai))
    names = [r for r, _ in rows]
    sens = [100 * (ms.sensitivity or 0) for _, ms in rows]
    spec = [100 * (ms.specificity or 0) for _, ms in rows]
    x = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(rows) + 1.5), 3.2))
        ax.bar(x - 0.2, sens, 0.4, label="Sensitivity")
        ax.bar(x + 0.2, spec, 0.4, label="Specificity")
        ax.set_xticks(x, names)
        ax.set_ylim(0, 105)
        ax.set_ylabel("%")
        ax.legend(frameon=False, ncol=2, loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def overlay_rgb(base: np.ndarray, heat: np.ndarray, alpha: float = 0.45) -> np.ndarray:
    """Grayscale base blended with a colour-mapped heat channel, uint8 RGB."""
    cmap = matplotlib.colormaps["inferno"]
    colour = cmap(np.clip(heat, 0, 1))[..., :3]
    gray = np.repeat(np.clip(base, 0, 1)[..., None], 3, axis=2)
    mix = (1 - alpha) * gray + alpha * colour
    return np.round(mix * 255).astype(np.uint8)


def save_overlay(base: np.ndarray, heat: np.ndarray, path, alpha: float = 0.45) -> None:
    Image.fromarray(overlay_rgb(base, heat, alpha), mode="RGB").save(path)
