"""Optional PNG figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def pr_curve(recall, precision, path, label=None):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(recall, precision, marker="o", ms=3, lw=1.2, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    if label:
        ax.legend(frameon=False)
    _save(fig, path)


def topn_bars(counts, n_queries, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    n = np.arange(1, len(counts) + 1)
    ax.bar(n, counts, color="0.4")
    ax.axhline(n_queries, color="k", lw=0.8, ls="--")
    ax.set_xticks(n)
    ax.set_xlabel("N")
    ax.set_ylabel("queries with same-class N-th result")
    _save(fig, path)


def cost_scatter(neg_log_rf, neg_log_knn, relevant, epsilon, path):
    """Clusters in the (-ln P_rf, -ln P_knn) plane with the J = epsilon line."""
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    rel = np.asarray(relevant, dtype=bool)
    ax.scatter(neg_log_rf[~rel], neg_log_knn[~rel], s=14, c="0.6", label="filtered")
    ax.scatter(neg_log_rf[rel], neg_log_knn[rel], s=18, c="C3", label="relevant")
    top = max(float(np.max(neg_log_rf)), float(np.max(neg_log_knn)), epsilon) * 1.05
    ax.plot([0, epsilon], [epsilon, 0], "k--", lw=0.8)
    ax.set_xlim(-0.2, top)
    ax.set_ylim(-0.2, top)
    ax.set_xlabel("-ln P_rf")
    ax.set_ylabel("-ln P_knn")
    ax.legend(frameon=False, loc="upper right")
    _save(fig, path)
