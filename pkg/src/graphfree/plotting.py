"""Figures written next to the JSON/CSV reports.

Everything renders through the non-interactive Agg backend and is saved
straight to disk; nothing is ever shown.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"Gfs": "#1b7837", "GraphConv": "#762a83"}
# PNG metadata stripped so identical data give identical files
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _figure(width=6.0, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden))
    ax.grid(True, which="both", alpha=0.3, linewidth=0.6)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_scaling(records, fits, path):
    """Log-log wall time vs vertex count, one series per layer kind."""
    fig, ax = _figure()
    fit_by_kind = {f.layer_kind: f for f in fits}
    for kind in sorted({r.layer_kind for r in records}):
        pts = [(r.n, r.wall_seconds) for r in records
               if r.layer_kind == kind and not r.failed and r.wall_seconds]
        if not pts:
            continue
        n, t = map(np.array, zip(*pts))
        label = kind
        if kind in fit_by_kind:
            f = fit_by_kind[kind]
            label = f"{kind} (slope {f.slope:.2f}, $r^2$ {f.r_squared:.3f})"
            ax.plot(n, np.exp(f.intercept) * n**f.slope, "--", color=COLORS.get(kind), lw=1)
        ax.plot(n, t, "o-", color=COLORS.get(kind), label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("vertices N")
    ax.set_ylabel("median wall time [s]")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_suite(table: dict, path, metric: str = "mae"):
    """Bar chart of a test metric for each row of a suite table."""
    rows = table["rows"]
    labels = [r["label"] if "adjacency_kind" not in r else f"{r['label']}\n{r['adjacency_kind']}"
              for r in rows]
    values = [r["test"][metric] for r in rows]
    fig, ax = _figure(width=max(5.0, 1.1 * len(rows)))
    ax.bar(range(len(rows)), values, color="#4d4d4d", width=0.6)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=8)
    lo = min(values)
    ax.set_ylim(0.9 * lo, 1.02 * max(values))
    ax.set_ylabel(f"test {metric.upper()}")
    ax.set_title(table.get("suite", ""))
    return _save(fig, path)


def plot_training(report: dict, path):
    """Train loss per epoch and test MAE per forecast step."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.4))
    left.plot(np.arange(1, len(report["train_loss"]) + 1), report["train_loss"], color="k")
    left.set_xlabel("epoch")
    left.set_ylabel("train MAE (normalized)")
    steps = np.arange(1, len(report["horizon"]) + 1)
    right.plot(steps, [h["mae"] for h in report["horizon"]], "o-", color="#2166ac")
    right.set_xlabel("forecast step")
    right.set_ylabel("test MAE")
    for ax in (left, right):
        ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_nodeclass(report: dict, path):
    fig, ax = _figure()
    epochs = np.arange(1, len(report["train_accuracy_curve"]) + 1)
    ax.plot(epochs, report["train_accuracy_curve"], label="train")
    ax.plot(epochs, report["test_accuracy_curve"], label="test")
    ax.axhline(report["majority_baseline"], color="grey", ls=":", label="majority class")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title(report["kind"])
    ax.legend(frameon=False)
    return _save(fig, path)
