"""Optional SVG line plots for runs and sweeps (matplotlib, Agg backend)."""

from __future__ import annotations


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_loss_curve(record, path):
    """Per-epoch mean loss components for one run."""
    plt = _pyplot()
    epochs = [s.epoch for s in record.epoch_stats]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [s.mean_total for s in record.epoch_stats], label="total")
    ax.plot(epochs, [s.mean_main for s in record.epoch_stats], label="main")
    if any(s.mean_ilrb for s in record.epoch_stats):
        ax.plot(epochs, [s.mean_ilrb for s in record.epoch_stats], label="instance blend")
    if any(s.mean_plrb for s in record.epoch_stats):
        ax.plot(epochs, [s.mean_plrb for s in record.epoch_stats], label="prototype blend")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_map_vs_proportion(per_proportion: dict, path):
    """Mean mAP against the known-label proportion."""
    plt = _pyplot()
    proportions = sorted(per_proportion)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(proportions, [per_proportion[p]["mAP"] for p in proportions], marker="o")
    ax.set_xlabel("known label proportion")
    ax.set_ylabel("mAP")
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
