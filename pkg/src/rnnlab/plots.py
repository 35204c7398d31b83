"""Matplotlib figure rendering for the report paths: fixed-point region
maps, training curves, per-length generalization, and state trajectories.
Figures are written next to the delimited outputs; CSV remains the
machine-readable contract."""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_fixed_point_sweep(path, kind_name, w_values, b_values, grid):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(grid, origin="lower", aspect="auto",
                   extent=[b_values[0], b_values[-1],
                           w_values[0], w_values[-1]],
                   cmap="viridis", vmin=1, vmax=3)
    fig.colorbar(im, ax=ax, label="fixed point count", ticks=[1, 2, 3])
    ax.set_xlabel("b")
    ax.set_ylabel("w")
    ax.set_title(f"fixed points of {kind_name}(w*x+b)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_fixed_point_map(path, act, report):
    xs = np.linspace(-1.5 if act.kind.value == "tanh" else -0.5, 1.5, 400)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(xs, act(xs), label=f"{act.kind.value}({act.w:g}x+{act.b:+g})")
    ax.plot(xs, xs, "k-", lw=0.8, label="g(x) = x")
    for p in report.points:
        marker = "o" if p.stability.value == "stable" else (
            "x" if p.stability.value == "unstable" else "s")
        ax.plot([p.xi], [p.xi], marker, ms=9,
                label=f"{p.stability.value} xi={p.xi:.4f}")
    ax.legend(fontsize=8)
    ax.set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_training_log(path, log):
    its = [r[0] for r in log]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, [r[1] for r in log], label="train loss", alpha=0.7)
    ax.plot(its, [r[2] for r in log], label="val loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("BCE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_length_buckets(path, bucket_acc, bucket_width, title=""):
    keys = sorted(bucket_acc)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(f"{k}-{k + bucket_width - 1}") for k in keys],
           [bucket_acc[k] for k in keys])
    ax.set_ylim(0, 100)
    ax.axhline(50, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("test length bucket")
    ax.set_ylabel("accuracy (%)")
    if title:
        ax.set_title(title)
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_trace(path, trace, grammar, use_cell_state=False):
    steps = trace.steps
    if not steps:
        return
    d = len(steps[0][2])
    has_c = steps[0][3] is not None
    series = np.array([(s[3] if (use_cell_state and has_c) else s[2])
                       for s in steps])
    labels = [grammar.symbols_text[s[1]] for s in steps]
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(d):
        ax.plot(range(1, len(steps) + 1), series[:, i],
                marker=".", label=f"unit {i}")
    ax.set_xticks(range(1, len(steps) + 1))
    ax.set_xticklabels(labels)
    what = "cell" if (use_cell_state and has_c) else "hidden"
    ax.set_ylabel(f"{what} state")
    ax.set_xlabel("input symbol")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
