"""Figures rendered next to the CSV outputs (matplotlib, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_tradeoff", "plot_cache_opt", "plot_trace"]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_tradeoff(aggregates, path) -> Path:
    """Interruption and overflow probability against mean per-user power."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    policies = sorted({r.policy for r in aggregates})
    for policy in policies:
        pts = sorted(
            (r.values["avg_power_per_user"], r.values["interruption_prob"], r.values["overflow_prob"])
            for r in aggregates
            if r.policy == policy and r.seed == "mean"
        )
        if not pts:
            continue
        x, i, b = zip(*pts)
        axes[0].plot(x, i, marker="o", label=policy)
        axes[1].plot(x, b, marker="o", label=policy)
    for ax, name in zip(axes, ("interruption probability", "overflow probability")):
        ax.set_xlabel("average power per user")
        ax.set_ylabel(name)
        ax.set_yscale("symlog", linthresh=1e-4)
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    return _save(fig, path)


def plot_cache_opt(state, path) -> Path:
    """Windowed objective and cache occupancy over the optimizer iterations."""
    it = [r.iteration for r in state.trace]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(it, [r.u_window_avg for r in state.trace])
    axes[0].set_ylabel("windowed objective")
    axes[1].plot(it, [r.occupancy_bits / 8e9 for r in state.trace])
    axes[1].set_ylabel("relay occupancy (GB)")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_trace(trace, cfg, path) -> Path:
    """Buffer trajectories with the two thresholds."""
    fig, ax = plt.subplots(figsize=(8, 4))
    for k in range(trace.queue.shape[1]):
        ax.plot(trace.slot, trace.queue[:, k], lw=0.6, label=f"user {k + 1}")
    ax.axhline(cfg.w_low, color="k", ls="--", lw=0.8)
    ax.axhline(cfg.w_high, color="k", ls=":", lw=0.8)
    ax.set_xlabel("slot")
    ax.set_ylabel("buffer (bits)")
    ax.legend(fontsize="small")
    return _save(fig, path)
