"""Figure rendering for scan maps and free-energy surfaces.

Both renderers take the same data that goes into the CSV outputs, so a CLI
run can drop a PNG next to the delimited file.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_REGION_COLORS = {
    "LearnableInnerBound": "#2060c0",
    "UnlearnableLemma3": "#c03020",
    "UnlearnableLemma2": "#e06040",
    "UnlearnableLemma1": "#f09060",
    "EmpiricalMatch": "#101010",
    "EmpiricalNoMatch": "#707070",
    "Undetermined": "#b0b0b0",
}


def render_scan_map(rows, path, title="learnability scan"):
    """Scatter of scan rows colored by verdict.

    rows: iterables of (mu_v, mu_e, verdict string)."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    by_verdict = {}
    for mu_v, mu_e, verdict in rows:
        by_verdict.setdefault(verdict, []).append((mu_v, mu_e))
    for verdict in _REGION_COLORS:
        pts = by_verdict.pop(verdict, None)
        if pts:
            arr = np.asarray(pts)
            ax.scatter(arr[:, 0], arr[:, 1], s=4, marker="s",
                       color=_REGION_COLORS[verdict], label=verdict, linewidths=0)
    for verdict, pts in by_verdict.items():  # anything unexpected still shows up
        arr = np.asarray(pts)
        ax.scatter(arr[:, 0], arr[:, 1], s=4, marker="s", label=verdict, linewidths=0)
    ax.set_xlabel("node marginal $\\mu_v$")
    ax.set_ylabel("edge marginal $\\mu_e$")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=7, framealpha=0.9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_surface(mu_v, mu_e, F, path, maximizers=(), target=None,
                   title="Bethe free energy surface"):
    """Heat map of a homogeneous free-energy surface with maximizers marked."""
    mu_v = np.asarray(mu_v)
    mu_e = np.asarray(mu_e)
    F = np.asarray(F)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    sc = ax.scatter(mu_v, mu_e, c=F, s=3, marker="s", cmap="viridis", linewidths=0)
    fig.colorbar(sc, ax=ax, label="F")
    if maximizers:
        arr = np.asarray([(m[0], m[1]) for m in maximizers])
        ax.scatter(arr[:, 0], arr[:, 1], marker="*", s=120, color="white",
                   edgecolors="black", label="maximizers", zorder=3)
    if target is not None:
        ax.scatter([target[0]], [target[1]], marker="o", s=60, color="red",
                   edgecolors="black", label="target", zorder=3)
    ax.set_xlabel("node marginal $\\mu_v$")
    ax.set_ylabel("edge marginal $\\mu_e$")
    ax.set_title(title)
    if maximizers or target is not None:
        ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
