"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from renderwait.replay import Aggregate  # noqa: E402


def _strategy_order(names: set[str]) -> list[str]:
    def key(s: str) -> tuple[int, int]:
        if s.startswith("fixed:"):
            return (0, int(s[6:]))
        return (1, 0) if s == "adaptive" else (2, 0)

    return sorted(names, key=key)


def bench_figure(aggregates: list[Aggregate], path: str | os.PathLike) -> None:
    """Reproducibility and mean elapsed time per strategy, one bar group per profile."""
    profiles = sorted({a.profile for a in aggregates})
    strategies = _strategy_order({a.strategy for a in aggregates})
    table = {(a.profile, a.strategy): a for a in aggregates}
    fig, (ax_r, ax_t) = plt.subplots(1, 2, figsize=(11, 4), constrained_layout=True)
    width = 0.8 / max(len(strategies), 1)
    x = np.arange(len(profiles))
    for k, s in enumerate(strategies):
        rep = [100 * table[(p, s)].reproducibility if (p, s) in table else 0 for p in profiles]
        sec = [table[(p, s)].mean_elapsed_ms / 1000 if (p, s) in table else 0 for p in profiles]
        ax_r.bar(x + k * width, rep, width, label=s)
        ax_t.bar(x + k * width, sec, width, label=s)
    for ax, title, unit in ((ax_r, "Reproducibility", "%"), (ax_t, "Mean replay time", "virtual s")):
        ax.set_xticks(x + width * (len(strategies) - 1) / 2, profiles)
        ax.set_title(title)
        ax.set_ylabel(unit)
    ax_r.set_ylim(0, 105)
    ax_t.legend(fontsize="small")
    fig.savefig(path, dpi=100)
    plt.close(fig)


def training_figure(history: list[dict], path: str | os.PathLike) -> None:
    """Per-epoch train and validation BCE."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(epochs, [h["train_loss"] for h in history], marker="o", label="train")
    ax.plot(epochs, [h["val_loss"] for h in history], marker="s", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("BCE loss")
    ax.set_yscale("log")
    ax.legend()
    fig.savefig(path, dpi=100)
    plt.close(fig)
