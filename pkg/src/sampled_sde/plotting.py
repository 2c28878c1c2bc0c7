"""Figure rendering for the report paths.

Everything here writes PNG files next to the delimited data the CLI emits;
nothing is shown interactively (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .montecarlo import ErrorStats
from .rates import RateFit


def render_time_series(stats: ErrorStats, path: str, title: str | None = None) -> None:
    """Residual-mean-vs-time panel with a +-2 stderr band."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(stats.times, stats.mean_resid, lw=0.9, color="tab:blue",
            label=f"eps = {stats.eps:g}")
    ax.fill_between(stats.times, stats.mean_resid - 2 * stats.stderr,
                    stats.mean_resid + 2 * stats.stderr,
                    alpha=0.25, color="tab:blue", linewidth=0)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel("mean residual")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_overlay(stats_by_eps: dict[float, ErrorStats], path: str,
                   title: str | None = None) -> None:
    """One panel overlaying the residual means of several noise sizes."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for eps in sorted(stats_by_eps, reverse=True):
        s = stats_by_eps[eps]
        ax.plot(s.times, s.mean_resid, lw=0.9, label=f"eps = {eps:g}")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel("mean residual")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_rate_fit(fit: RateFit, path: str, title: str | None = None) -> None:
    """Log-log error-vs-eps scatter with the fitted power law."""
    import numpy as np

    eps = np.array([e for e, _ in fit.points])
    err = np.array([v for _, v in fit.points])
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    ax.loglog(eps, err, "o", color="tab:blue", label="measured")
    line = np.exp(fit.intercept) * eps ** fit.slope
    ax.loglog(eps, line, "--", color="tab:red",
              label=f"slope {fit.slope:.3f} (r^2 = {fit.r_squared:.4f})")
    ax.set_xlabel("eps")
    ax.set_ylabel("error functional")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
