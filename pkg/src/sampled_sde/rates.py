"""Noise-size ladders, empirical convergence orders, and table rendering.

A ladder runs one ensemble per noise size eps, with the sampling period
tied to eps by either a fixed ratio (delta = r * eps, so the ratio constant
is exactly r) or a power rule (delta = eps ** a with a > 1, ratio constant
0).  Each rung gets its own grid, h = delta / steps_per_sample, so the
integrator refines together with the ladder, and its own seed,
master_seed + rung index, so rungs are statistically independent.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Literal

import numpy as np

from .errors import ConfigurationError, FitError, SampledSdeError
from .integrate import ScaleParams, TimeGrid
from .models import ModelSpec
from .montecarlo import EnsembleConfig, ErrorStats, run_ensemble

__all__ = [
    "RatioRule",
    "ExponentRule",
    "LadderSpec",
    "RateFit",
    "FUNCTIONALS",
    "run_ladder",
    "fit_rate",
    "render_table",
]

FUNCTIONALS = ("lln_sup", "clt_sup", "mean_resid_sup")
Functional = Literal["lln_sup", "clt_sup", "mean_resid_sup"]


@dataclasses.dataclass(frozen=True)
class RatioRule:
    """delta = ratio * eps; the ratio constant c equals the ratio exactly."""

    ratio: float

    def __post_init__(self):
        if not (self.ratio > 0 and math.isfinite(self.ratio)):
            raise ConfigurationError("delta_ratio", "must be positive")

    def scales(self, eps: float) -> ScaleParams:
        return ScaleParams(eps=eps, delta=self.ratio * eps, c=self.ratio)


@dataclasses.dataclass(frozen=True)
class ExponentRule:
    """delta = eps ** exponent with exponent > 1; ratio constant c = 0."""

    exponent: float

    def __post_init__(self):
        if not (self.exponent > 1 and math.isfinite(self.exponent)):
            raise ConfigurationError("delta_exp", "exponent must be > 1")

    def scales(self, eps: float) -> ScaleParams:
        return ScaleParams(eps=eps, delta=eps ** self.exponent, c=0.0)


@dataclasses.dataclass(frozen=True)
class LadderSpec:
    """Descending noise sizes, the delta rule, and the per-rung ensemble."""

    eps_values: tuple[float, ...]
    delta_rule: RatioRule | ExponentRule
    per_rung: EnsembleConfig

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_values)
        object.__setattr__(self, "eps_values", eps)
        if len(eps) == 0:
            raise ConfigurationError("eps", "ladder needs at least one noise size")
        if any(e <= 0 for e in eps):
            raise ConfigurationError("eps", "noise sizes must be positive")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigurationError("eps", "noise sizes must be strictly decreasing")


@dataclasses.dataclass(frozen=True)
class RateFit:
    """Log-log least-squares fit of error against noise size."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]


def _functional_value(stats: ErrorStats, functional: str) -> float:
    if functional == "lln_sup":
        return float(stats.lln_moment.max())
    if functional == "clt_sup":
        return float(stats.clt_moment.max())
    if functional == "mean_resid_sup":
        return stats.sup_mean_resid_abs
    raise ConfigurationError("functional", f"unknown functional {functional!r} "
                                           f"(choose from {', '.join(FUNCTIONALS)})")


def run_ladder(model: ModelSpec, ladder: LadderSpec, grid_template: TimeGrid,
               functional: Functional, threads: int = 1,
               keep_stats: list[ErrorStats] | None = None) -> list[tuple[float, float]]:
    """One ensemble per rung; returns (eps, sup-in-time functional) pairs.

    ``grid_template`` fixes the horizon and steps-per-sample; the step size
    follows each rung's delta.  Pass ``keep_stats`` to also collect the full
    per-rung ErrorStats (e.g. for tables or several functionals at once).
    """
    if functional not in FUNCTIONALS:
        raise ConfigurationError("functional", f"unknown functional {functional!r} "
                                               f"(choose from {', '.join(FUNCTIONALS)})")
    out: list[tuple[float, float]] = []
    for k, eps in enumerate(ladder.eps_values):
        scales = ladder.delta_rule.scales(eps)
        grid = TimeGrid.for_scales(grid_template.horizon, scales,
                                   grid_template.steps_per_sample)
        cfg = dataclasses.replace(
            ladder.per_rung,
            master_seed=(ladder.per_rung.master_seed + k) % 2 ** 64)
        try:
            stats = run_ensemble(model, scales, grid, cfg, threads=threads)
        except SampledSdeError as err:
            err.args = (f"rung {k} (eps={eps!r}): {err}",)
            raise
        if keep_stats is not None:
            keep_stats.append(stats)
        out.append((eps, _functional_value(stats, functional)))
    return out


def fit_rate(points: Iterable[tuple[float, float]]) -> RateFit:
    """Least-squares line through (log eps, log error); the slope is the order."""
    pts = tuple((float(e), float(v)) for e, v in points)
    if len(pts) < 2:
        raise FitError(f"need at least two points to fit a rate, got {len(pts)}")
    if any(v <= 0 for _, v in pts):
        raise FitError("nonpositive error value: functional hit the Monte Carlo "
                       "noise floor or is degenerate")
    lx = np.log([e for e, _ in pts])
    ly = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(ly * ly))):
        r_squared = 1.0  # constant errors: the line fits them exactly
    else:
        r_squared = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=r_squared, points=pts)


def render_table(results: dict[tuple[float, float], ErrorStats]) -> list[str]:
    """Rows (eps, delta, |max error|, |min error|) grouped by initial condition.

    ``results`` maps (x0, eps) to the rung's ErrorStats.  Sections appear in
    ascending x0 order, rows within a section in descending eps, so the
    output is invariant to the mapping's iteration order.  Values use
    scientific notation with four significant digits.
    """
    if not results:
        raise ConfigurationError("results", "no table entries to render")
    lines: list[str] = []
    header = f"{'eps':>12}  {'delta':>12}  {'|max error|':>12}  {'|min error|':>12}"
    for x0 in sorted({key[0] for key in results}):
        lines.append(f"initial condition x0 = {x0:g}")
        lines.append(header)
        section = sorted((key[1] for key in results if key[0] == x0), reverse=True)
        for eps in section:
            stats = results[(x0, eps)]
            lines.append(
                f"{eps:>12.3e}  {stats.delta:>12.3e}  "
                f"{stats.sup_mean_resid_abs:>12.3e}  {stats.min_mean_resid_abs:>12.3e}")
    return lines
