"""Ensembles of coupled paths with deterministic reduction.

Paths are processed in fixed blocks of 256 consecutive indices.  Each
block generates its lanes' normals from their per-path substreams (see
:mod:`sampled_sde.rng`), advances the coupled kernel, and accumulates
per-time partial sums; the partials are then combined block-by-block in
ascending block order once all blocks finish.  Because the block layout is
a function of n_paths alone and every lane is a pure function of
(master_seed, path index), the reduced statistics are byte-identical for
any worker count.

The error functionals follow the common-random-numbers convention: within
each path the noisy path X and the limiting fluctuation Z consume the same
increments, so per-time residuals X - x - eps*Z measure the expansion
error, never Brownian disagreement between independently drawn paths.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigurationError, PathDivergenceError
from .integrate import MomentCurves, ScaleParams, TimeGrid, _euler_block, _profile, moment_curves
from .models import ModelSpec
from .rng import substream

__all__ = [
    "EnsembleConfig",
    "ErrorStats",
    "GaussianCheck",
    "run_ensemble",
    "gaussian_check",
]

_BLOCK = 256  # paths per block; fixed so results never depend on worker count


@dataclasses.dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble size, master seed, and the moment order p."""

    n_paths: int
    master_seed: int
    p: int = 2

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("n_paths", "need at least one path")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ConfigurationError("master_seed", "must be a 64-bit unsigned integer")
        if self.p < 1:
            raise ConfigurationError("p", "moment order must be >= 1")


@dataclasses.dataclass(frozen=True)
class ErrorStats:
    """Per-time and sup-in-time Monte Carlo error functionals.

    ``mean_resid`` estimates E[X_t - x_t - eps*Z_t]; ``lln_moment`` and
    ``clt_moment`` estimate E|X_t - x_t|^p and E|(X_t - x_t)/eps - Z_t|^p.
    ``sup_mean_resid_abs`` / ``min_mean_resid_abs`` are the max / min of
    |mean_resid| over the reported grid, the min excluding t = 0 where the
    residual is identically zero.  ``eps``, ``delta``, ``n_paths`` and ``p``
    record the run so tables can be rendered from the stats alone.
    """

    times: np.ndarray
    mean_resid: np.ndarray
    stderr: np.ndarray
    lln_moment: np.ndarray
    clt_moment: np.ndarray
    sup_mean_resid_abs: float
    min_mean_resid_abs: float
    eps: float
    delta: float
    n_paths: int
    p: int


@dataclasses.dataclass(frozen=True)
class GaussianCheck:
    """Standardized per-time discrepancies of the surrogate's mean/variance."""

    times: np.ndarray
    z_mean: np.ndarray
    z_var: np.ndarray


@dataclasses.dataclass(frozen=True)
class _Accumulated:
    times: np.ndarray
    out_idx: np.ndarray
    x_det: np.ndarray          # deterministic path at the reported indices
    sum_resid: np.ndarray
    sum_resid_sq: np.ndarray
    sum_lln: np.ndarray
    sum_clt: np.ndarray
    sum_z: np.ndarray
    sum_z_sq: np.ndarray


def _block_ranges(n_paths: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _BLOCK, n_paths)) for lo in range(0, n_paths, _BLOCK)]


def _stream_draw(streams):
    lanes = len(streams)

    def draw(count: int) -> np.ndarray:
        block = np.empty((count, lanes))
        for j, s in enumerate(streams):
            block[:, j] = s.take(count)
        return block

    return draw


def _run_block(model, scales, grid, prof, cfg, lo, hi, out_idx, x_out):
    streams = [substream(cfg.master_seed, j) for j in range(lo, hi)]
    try:
        X, Z = _euler_block(model, scales, grid, prof, _stream_draw(streams),
                            lanes=hi - lo, out_idx=out_idx)
    except PathDivergenceError as err:
        lane = err.path_index if err.path_index is not None else 0
        raise PathDivergenceError(step=err.step, path_index=lo + lane,
                                  seed=cfg.master_seed) from None
    resid = X - x_out - scales.eps * Z
    dev = np.abs(X - x_out)
    return (
        resid.sum(axis=0),
        (resid * resid).sum(axis=0),
        (dev ** cfg.p).sum(axis=0),
        (np.abs(resid / scales.eps) ** cfg.p).sum(axis=0),
        Z.sum(axis=0),
        (Z * Z).sum(axis=0),
    )


def _accumulate(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
                cfg: EnsembleConfig, threads: int = 1,
                max_output_points: int = 4096) -> _Accumulated:
    grid.check_delta(scales.delta)
    out_idx = grid.output_indices(max_output_points)
    prof = _profile(model, scales, grid)
    x_out = prof.x[out_idx]

    ranges = _block_ranges(cfg.n_paths)
    partials: list = [None] * len(ranges)

    def work(b: int):
        lo, hi = ranges[b]
        return b, _run_block(model, scales, grid, prof, cfg, lo, hi, out_idx, x_out)

    if threads and threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for b, part in pool.map(work, range(len(ranges))):
                partials[b] = part
    else:
        for b in range(len(ranges)):
            partials[b] = work(b)[1]

    # ascending-block reduction: fixed order, independent of who computed what
    totals = [np.zeros(len(out_idx)) for _ in range(6)]
    for part in partials:
        for acc, term in zip(totals, part):
            acc += term

    return _Accumulated(
        times=grid.times()[out_idx],
        out_idx=out_idx,
        x_det=x_out,
        sum_resid=totals[0],
        sum_resid_sq=totals[1],
        sum_lln=totals[2],
        sum_clt=totals[3],
        sum_z=totals[4],
        sum_z_sq=totals[5],
    )


def _sample_variance(total: np.ndarray, total_sq: np.ndarray, n: int) -> np.ndarray:
    if n < 2:
        return np.zeros_like(total)
    var = (total_sq - total * total / n) / (n - 1)
    return np.maximum(var, 0.0)


def run_ensemble(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
                 cfg: EnsembleConfig, threads: int = 1,
                 max_output_points: int = 4096) -> ErrorStats:
    """Monte Carlo error functionals over cfg.n_paths coupled paths.

    The result is a pure function of (model, scales, grid, cfg); ``threads``
    only distributes the fixed path blocks over workers.
    """
    acc = _accumulate(model, scales, grid, cfg, threads, max_output_points)
    n = cfg.n_paths

    mean_resid = acc.sum_resid / n
    var_resid = _sample_variance(acc.sum_resid, acc.sum_resid_sq, n)
    stderr = np.sqrt(var_resid / n)
    abs_mean = np.abs(mean_resid)

    return ErrorStats(
        times=acc.times,
        mean_resid=mean_resid,
        stderr=stderr,
        lln_moment=acc.sum_lln / n,
        clt_moment=acc.sum_clt / n,
        sup_mean_resid_abs=float(abs_mean.max()),
        min_mean_resid_abs=float(abs_mean[1:].min()) if len(abs_mean) > 1 else 0.0,
        eps=scales.eps,
        delta=scales.delta,
        n_paths=n,
        p=cfg.p,
    )


def gaussian_check(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
                   cfg: EnsembleConfig, threads: int = 1,
                   max_output_points: int = 4096,
                   curves: MomentCurves | None = None) -> GaussianCheck:
    """Standardized discrepancies of the surrogate ensemble vs its moment curves.

    For each reported time, z_mean = (sample mean of V - mu) / (s_V / sqrt(n))
    and z_var = (sample variance of V - xi2) / (xi2 * sqrt(2/(n-1))).  Times
    where the reference scale is zero and the discrepancy is zero (e.g.
    t = 0, where V is deterministic) report z = 0.
    """
    acc = _accumulate(model, scales, grid, cfg, threads, max_output_points)
    n = cfg.n_paths
    if curves is None:
        curves = moment_curves(model, scales, grid)
    mu = curves.mu[acc.out_idx]
    xi2 = curves.xi2[acc.out_idx]

    mean_v = acc.x_det + scales.eps * (acc.sum_z / n)
    var_v = scales.eps ** 2 * _sample_variance(acc.sum_z, acc.sum_z_sq, n)

    se_mean = np.sqrt(var_v / n)
    z_mean = _safe_z(mean_v - mu, se_mean)

    se_var = xi2 * np.sqrt(2.0 / max(n - 1, 1))
    z_var = _safe_z(var_v - xi2, se_var)

    return GaussianCheck(times=acc.times, z_mean=z_mean, z_var=z_var)


def _safe_z(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / se
    return np.where(se > 0.0, z, np.where(diff == 0.0, 0.0, np.inf))
