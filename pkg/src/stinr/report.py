"""Figure rendering for the report paths: every CSV a command emits can get
a PNG next to it. Headless (Agg) and deterministic: fixed dpi, fixed
metadata, no timestamps.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "stinr"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_heatmap(values: np.ndarray, path, title: str = "", mask: np.ndarray | None = None):
    """Field heatmap; masked cells render blank."""
    data = np.array(values, dtype=float)
    if mask is not None:
        data = np.where(mask, data, np.nan)
    fig, ax = plt.subplots(figsize=(7, 4))
    im = ax.imshow(data, aspect="auto", origin="lower", cmap="viridis",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("axis 1 index")
    ax.set_ylabel("axis 0 index")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def save_loss_curve(steps, losses, path, title: str = "training loss"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("batch MSE")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_spectrum(freqs, mags, path, title: str = "single-sided spectrum"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(freqs, mags, lw=1.0)
    ax.set_xlabel("frequency (cycles/sample)")
    ax.set_ylabel("amplitude")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_lowrank_track(points, path, title: str = "low-rank diagnostics"):
    steps = [p.step for p in points]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(steps, [p.nuclear_norm for p in points], marker="o", ms=3)
    ax1.set_xlabel("step")
    ax1.set_ylabel("nuclear norm")
    ax2.plot(steps, [p.effective_rank for p in points], marker="o", ms=3)
    ax2.set_xlabel("step")
    ax2.set_ylabel("effective rank")
    fig.suptitle(title)
    _finish(fig, path)


def save_kernel_slice(offsets, values, path, title: str = "composed kernel"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(offsets, values, lw=1.0)
    ax.set_xlabel("coordinate offset")
    ax.set_ylabel("kernel value")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)
