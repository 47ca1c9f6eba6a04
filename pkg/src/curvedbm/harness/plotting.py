"""Matplotlib figures for the CLI reports (Agg backend, PNG)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"font.size": 9, "axes.grid": True, "grid.alpha": 0.3, "figure.dpi": 120,
          "savefig.bbox": "tight"}


def _estimates(ax, data):
    labels = [d["label"] for d in data]
    est = np.array([d["estimate"] for d in data], dtype=float)
    se = np.array([d.get("se", 0.0) for d in data], dtype=float)
    pos = np.arange(len(labels))
    ax.errorbar(pos, est, yerr=1.96 * se, fmt="o", capsize=4, color="C0")
    for d, p in zip(data, pos):
        if d.get("target") is not None:
            ax.plot([p - 0.3, p + 0.3], [d["target"]] * 2, color="C3", lw=1.2)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("estimate (95% CI)")


def _histogram(ax, data):
    edges = np.asarray(data["edges"])
    mid = 0.5 * (edges[1:] + edges[:-1])
    ax.bar(mid, data["hist"], width=np.diff(edges), color="C0", alpha=0.6, label="sampled")
    ax.plot(mid, data["expected"], color="C3", lw=1.5, label="oracle")
    ax.set_xlabel(data.get("xlabel", "value"))
    ax.set_ylabel("count")
    ax.legend(frameon=False)


def _ecdf(ax, data):
    x = np.sort(np.asarray(data["samples"]))
    ax.step(x, np.arange(1, x.size + 1) / x.size, where="post", label="sampled", color="C0")
    ax.plot(data["grid"], data["cdf"], color="C3", lw=1.2, label="oracle")
    ax.set_xlabel(data.get("xlabel", "value"))
    ax.set_ylabel("CDF")
    ax.legend(frameon=False)


def _decay(ax, data):
    for label, y in data["series"].items():
        y = np.asarray(y, dtype=float)
        ax.semilogy(np.arange(1, y.size + 1), np.where(y > 0, y, np.nan), "o-", label=label)
    ax.set_xlabel(data.get("xlabel", "sweep"))
    ax.set_ylabel(data.get("ylabel", "successive distance"))
    ax.legend(frameon=False)


def _bars(ax, data):
    labels = list(data["values"])
    vals = np.array([data["values"][k] for k in labels], dtype=float)
    ax.bar(np.arange(len(labels)), vals, color="C0")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_ylabel(data.get("ylabel", "value"))


_KINDS = {"estimates": _estimates, "histogram": _histogram, "ecdf": _ecdf, "decay": _decay,
          "bars": _bars}


def render(plot, path, title=None):
    """Draw plot = (kind, data) to path; returns the path."""
    kind, data = plot
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        _KINDS[kind](ax, data)
        if title:
            ax.set_title(title)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
