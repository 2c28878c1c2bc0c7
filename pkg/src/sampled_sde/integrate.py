"""Time-stepping kernels for the coupled path system.

One Euler-Maruyama pass advances, on a shared grid and from the same
Brownian increments,

  * the noisy path X with its feedback input frozen between sampling
    instants (zero-order hold),
  * the limiting fluctuation path Z, a linear SDE along the deterministic
    closed-loop trajectory whose drift carries the sampling-induced
    correction -(c/2) * u'(x) * (f(x) + u(x)),

while the deterministic trajectory itself is integrated by classical RK4
on the same grid so its discretization error stays far below the
stochastic effects under study.  The normalized fluctuation (X - x)/eps
and the Gaussian surrogate x + eps*Z are defined from these, never
re-integrated.

The hold switches by grid index (every ``steps_per_sample`` steps), not by
comparing floating-point times, so sampling instants are classified
exactly.  For the linear model f = a*x, u = b*x, sigma = 1 an exact
per-interval transition is provided as a validation oracle; it consumes
the same standard normals as the Euler scheme, scaled by the
Ornstein-Uhlenbeck step factor instead of sqrt(h).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConfigurationError, PathDivergenceError
from .models import ModelSpec

__all__ = [
    "ScaleParams",
    "TimeGrid",
    "PathBundle",
    "MomentCurves",
    "pi_delta",
    "simulate_path",
    "moment_curves",
    "exact_linear_path",
]

_WINDOW = 4096        # steps advanced per normal-generation window
_GRID_RTOL = 1e-9     # tolerance for "exact multiple" grid checks


@dataclasses.dataclass(frozen=True)
class ScaleParams:
    """Noise size eps, sampling period delta, and the ratio constant c.

    ``c`` defaults to delta/eps, the finite-size surrogate for the limit of
    that ratio; ladder rules that pin the ratio set it exactly.  c = 0
    removes the sampling correction from the fluctuation drift.
    """

    eps: float
    delta: float
    c: float | None = None

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ConfigurationError("eps", "noise size must be positive")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigurationError("delta", "sampling period must be positive")
        if self.c is None:
            object.__setattr__(self, "c", self.delta / self.eps)
        elif not (self.c >= 0 and math.isfinite(self.c)):
            raise ConfigurationError("c", "ratio constant must be >= 0")


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_steps steps of size h covering [0, horizon].

    ``steps_per_sample`` is the number of integrator steps per sampling
    interval; construct via :meth:`for_scales` to guarantee h = delta / M
    so every sampling instant is a grid point.
    """

    horizon: float
    h: float
    steps_per_sample: int = 16

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigurationError("horizon", "must be positive")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigurationError("h", "step size must be positive")
        if self.steps_per_sample < 1:
            raise ConfigurationError("steps_per_sample", "must be >= 1")
        n = round(self.horizon / self.h)
        if n < 1 or abs(n * self.h - self.horizon) > _GRID_RTOL * max(1.0, self.horizon):
            raise ConfigurationError(
                "horizon", f"horizon {self.horizon!r} is not an integer multiple of h {self.h!r}")

    @classmethod
    def for_scales(cls, horizon: float, scales: ScaleParams,
                   steps_per_sample: int = 16) -> "TimeGrid":
        if steps_per_sample < 1:
            raise ConfigurationError("steps_per_sample", "must be >= 1")
        return cls(horizon=horizon, h=scales.delta / steps_per_sample,
                   steps_per_sample=steps_per_sample)

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.h)

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    def check_delta(self, delta: float) -> None:
        """Require the hold interval steps_per_sample * h to equal delta."""
        implied = self.steps_per_sample * self.h
        if abs(implied - delta) > _GRID_RTOL * delta:
            raise ConfigurationError(
                "delta",
                f"grid holds for {implied!r} per sample but delta is {delta!r}; "
                f"build the grid with TimeGrid.for_scales")

    def output_indices(self, max_points: int = 4096) -> np.ndarray:
        """Uniform-stride thinning of the grid to at most ``max_points``.

        Strides that divide n_steps are preferred so the final time stays on
        the reported grid; otherwise the tail point may be dropped.
        """
        n = self.n_steps
        if n + 1 <= max_points:
            return np.arange(n + 1)
        base = -(-n // (max_points - 1))
        for stride in range(base, 2 * base + 1):
            if n % stride == 0:
                return np.arange(0, n + 1, stride)
        return np.arange(0, n + 1, base)[:max_points]


@dataclasses.dataclass(frozen=True)
class PathBundle:
    """One coupled realization on a shared grid.

    ``dW`` holds the per-step Brownian increments (length n_steps); all
    state arrays have length n_steps + 1 with index i at time i*h.
    ``Z_eps`` is (X - x_det)/eps and ``V`` is x_det + eps*Z_lim, both
    defined pointwise from their constituents, never re-integrated.
    """

    grid: TimeGrid
    dW: np.ndarray
    X: np.ndarray
    x_det: np.ndarray
    Z_eps: np.ndarray
    Z_lim: np.ndarray
    V: np.ndarray


@dataclasses.dataclass(frozen=True)
class MomentCurves:
    """Mean and variance curves of the Gaussian surrogate x + eps*Z."""

    mu: np.ndarray
    xi2: np.ndarray


def pi_delta(t: float, delta: float) -> float:
    """Most recent sampling instant delta * floor(t / delta).

    Robust to floating-point division slop: if t/delta lies within 1e-9 of
    the next integer the instant snaps up, and the result is clamped to t so
    the contract result <= t < result + delta holds for representable
    inputs.
    """
    if delta <= 0:
        raise ConfigurationError("delta", "sampling period must be positive")
    if t < 0:
        raise ConfigurationError("t", "time must be nonnegative")
    q = t / delta
    k = math.floor(q)
    if q - k > 1.0 - 1e-9:
        k += 1
    return min(k * delta, t)


# ---------------------------------------------------------------------------
# deterministic passes


def _rk4_closed_loop(model: ModelSpec, grid: TimeGrid) -> np.ndarray:
    """Closed-loop trajectory on the grid by classical RK4."""
    n, h = grid.n_steps, grid.h
    rhs = model.closed_loop
    out = np.empty(n + 1)
    x = np.float64(model.x0)  # IEEE semantics: overflow becomes inf, not OverflowError
    out[0] = x
    h6 = h / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * h * k1)
            k3 = rhs(x + 0.5 * h * k2)
            k4 = rhs(x + h * k3)
            x = x + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not math.isfinite(x):
                raise PathDivergenceError(step=i + 1)
            out[i + 1] = x
    return out


def _rk4_with_moments(model: ModelSpec, scales: ScaleParams,
                      grid: TimeGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-loop trajectory plus the fluctuation mean/variance ODEs.

    Along x_t the surrogate mean correction m and variance shape v solve

        m' = (f'+u')(x) m - (c/2) u'(x) (f+u)(x),    m(0) = 0
        v' = 2 (f'+u')(x) v + sigma^2(x),            v(0) = 0

    and the curves are mu = x + eps*m, xi2 = eps^2 * v.
    """
    n, h = grid.n_steps, grid.h
    half_c = 0.5 * scales.c

    def rhs(x, m, v):
        a = model.d_drift(x) + model.d_feedback(x)
        g = model.drift(x) + model.feedback(x)
        s = model.sigma(x)
        return g, a * m - half_c * model.d_feedback(x) * g, 2.0 * a * v + s * s

    xs = np.empty(n + 1)
    ms = np.empty(n + 1)
    vs = np.empty(n + 1)
    x, m, v = np.float64(model.x0), np.float64(0.0), np.float64(0.0)
    xs[0], ms[0], vs[0] = x, m, v
    h6 = h / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            k1 = rhs(x, m, v)
            k2 = rhs(x + 0.5 * h * k1[0], m + 0.5 * h * k1[1], v + 0.5 * h * k1[2])
            k3 = rhs(x + 0.5 * h * k2[0], m + 0.5 * h * k2[1], v + 0.5 * h * k2[2])
            k4 = rhs(x + h * k3[0], m + h * k3[1], v + h * k3[2])
            x = x + h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            m = m + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            v = v + h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            if not (math.isfinite(x) and math.isfinite(m) and math.isfinite(v)):
                raise PathDivergenceError(step=i + 1)
            xs[i + 1], ms[i + 1], vs[i + 1] = x, m, v
    return xs, ms, vs


@dataclasses.dataclass(frozen=True)
class _DetProfile:
    """Per-step coefficients shared by every path of an ensemble.

    growth[i] = 1 + h*(f'+u')(x_i), push[i] = -(c/2)*h*u'(x_i)*(f+u)(x_i)
    and noise_gain[i] = sqrt(h)*sigma(x_i) turn the fluctuation update into
    Z <- growth*Z + push + noise_gain*n.
    """

    x: np.ndarray
    growth: np.ndarray
    push: np.ndarray
    noise_gain: np.ndarray


def _profile(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
             x_det: np.ndarray | None = None) -> _DetProfile:
    if x_det is None:
        x_det = _rk4_closed_loop(model, grid)
    h = grid.h
    xl = x_det[:-1]
    lin = np.asarray(model.d_drift(xl) + model.d_feedback(xl), dtype=float) + np.zeros_like(xl)
    corr = np.asarray(model.d_feedback(xl) * (model.drift(xl) + model.feedback(xl)),
                      dtype=float) + np.zeros_like(xl)
    sig = np.asarray(model.sigma(xl), dtype=float) + np.zeros_like(xl)
    return _DetProfile(
        x=x_det,
        growth=1.0 + h * lin,
        push=(-0.5 * scales.c * h) * corr,
        noise_gain=math.sqrt(h) * sig,
    )


# ---------------------------------------------------------------------------
# the coupled Euler kernel


def _euler_block(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
                 prof: _DetProfile, draw, lanes: int,
                 out_idx: np.ndarray | None,
                 hold_trace: list | None = None):
    """Advance ``lanes`` coupled (X, Z) lanes through the whole grid.

    ``draw(count)`` must return a (count, lanes) block of standard normals;
    successive calls continue each lane's stream.  With ``out_idx`` given,
    only those grid indices are recorded and the returned arrays have shape
    (lanes, len(out_idx)); otherwise full paths plus the consumed increments
    are returned.  Raises PathDivergenceError when a non-finite state is
    detected (checked once per window; full mode refines to the exact step).
    """
    n, h, M = grid.n_steps, grid.h, grid.steps_per_sample
    eps_sqh = scales.eps * math.sqrt(h)

    X = np.full(lanes, float(model.x0))
    Z = np.zeros(lanes)

    full = out_idx is None
    if full:
        X_rec = np.empty((lanes, n + 1))
        Z_rec = np.empty((lanes, n + 1))
        dW_rec = np.empty((lanes, n))
        X_rec[:, 0] = X
        Z_rec[:, 0] = Z
    else:
        X_rec = np.empty((lanes, len(out_idx)))
        Z_rec = np.empty((lanes, len(out_idx)))
        dW_rec = None
        ptr = 0
        if out_idx[0] == 0:
            X_rec[:, 0] = X
            Z_rec[:, 0] = Z
            ptr = 1

    drift, feedback, sigma = model.drift, model.feedback, model.sigma
    growth, push, gain = prof.growth, prof.push, prof.noise_gain
    u = None

    with np.errstate(over="ignore", invalid="ignore"):
        for w0 in range(0, n, _WINDOW):
            w1 = min(w0 + _WINDOW, n)
            normals = draw(w1 - w0)
            for i in range(w0, w1):
                if i % M == 0:
                    u = feedback(X)
                    if hold_trace is not None:
                        hold_trace.append((i, np.array(X, copy=True)))
                nv = normals[i - w0]
                X = X + h * (drift(X) + u) + eps_sqh * (sigma(X) * nv)
                Z = growth[i] * Z + push[i] + gain[i] * nv
                if full:
                    X_rec[:, i + 1] = X
                    Z_rec[:, i + 1] = Z
                    dW_rec[:, i] = math.sqrt(h) * nv
                elif ptr < len(out_idx) and i + 1 == out_idx[ptr]:
                    X_rec[:, ptr] = X
                    Z_rec[:, ptr] = Z
                    ptr += 1
            if not (np.isfinite(X).all() and np.isfinite(Z).all()):
                bad_lane = int(np.argmax(~(np.isfinite(X) & np.isfinite(Z))))
                step = w1
                if full:
                    bad = ~(np.isfinite(X_rec[bad_lane, : w1 + 1])
                            & np.isfinite(Z_rec[bad_lane, : w1 + 1]))
                    step = int(np.argmax(bad))
                raise PathDivergenceError(step=step, path_index=bad_lane)

    if full:
        return X_rec, Z_rec, dW_rec
    return X_rec, Z_rec


def _array_draw(noise: np.ndarray):
    """Adapt a pregenerated (lanes, n_steps) normal matrix to the draw API."""
    pos = 0

    def draw(count: int) -> np.ndarray:
        nonlocal pos
        block = noise[:, pos:pos + count].T
        pos += count
        return block

    return draw


def simulate_path(model: ModelSpec, scales: ScaleParams, grid: TimeGrid,
                  noise) -> PathBundle:
    """One coupled realization driven by the given standard normals.

    ``noise`` must supply one standard normal per grid step; the same
    increments sqrt(h)*noise drive both the noisy path and the limiting
    fluctuation path, so their pathwise difference measures the residual of
    the first-order expansion rather than Brownian disagreement.
    """
    grid.check_delta(scales.delta)
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 1 or noise.shape[0] != grid.n_steps:
        raise ConfigurationError(
            "noise", f"need exactly {grid.n_steps} standard normals, got shape {noise.shape}")

    prof = _profile(model, scales, grid)
    X_rec, Z_rec, dW_rec = _euler_block(
        model, scales, grid, prof, _array_draw(noise[None, :]), lanes=1, out_idx=None)

    X = X_rec[0]
    Z = Z_rec[0]
    z_eps = (X - prof.x) / scales.eps
    v = prof.x + scales.eps * Z
    bundle = PathBundle(grid=grid, dW=dW_rec[0], X=X, x_det=prof.x,
                        Z_eps=z_eps, Z_lim=Z, V=v)
    for arr in (bundle.dW, bundle.X, bundle.x_det, bundle.Z_eps, bundle.Z_lim, bundle.V):
        arr.flags.writeable = False
    return bundle


def moment_curves(model: ModelSpec, scales: ScaleParams, grid: TimeGrid) -> MomentCurves:
    """Mean and variance of the Gaussian surrogate via their ODE forms."""
    xs, ms, vs = _rk4_with_moments(model, scales, grid)
    return MomentCurves(mu=xs + scales.eps * ms, xi2=scales.eps ** 2 * vs)


def exact_linear_path(a: float, b: float, x0: float, scales: ScaleParams,
                      grid: TimeGrid, noise) -> np.ndarray:
    """Exact-in-distribution path for drift a*x, held feedback b*x, sigma = 1.

    Within each sampling interval the dynamics are linear with frozen
    forcing u = b * X(sample instant), so each step has the exact transition

        X(t+h) = e^(a h) X(t) + (u/a)(e^(a h) - 1)
                 + eps * sqrt((e^(2 a h) - 1)/(2 a)) * n_i.

    The i-th standard normal n_i is the one the Euler scheme would consume
    at step i, which couples the two schemes for strong-error comparison.
    """
    if a == 0.0:
        raise ConfigurationError("a", "drift rate must be nonzero (no a -> 0 limit form)")
    grid.check_delta(scales.delta)
    noise = np.asarray(noise, dtype=float)
    n, h, M = grid.n_steps, grid.h, grid.steps_per_sample
    if noise.shape != (n,):
        raise ConfigurationError(
            "noise", f"need exactly {n} standard normals, got shape {noise.shape}")

    e_ah = math.exp(a * h)
    force_gain = (e_ah - 1.0) / a
    step_sd = math.sqrt((math.exp(2.0 * a * h) - 1.0) / (2.0 * a))

    out = np.empty(n + 1)
    x = float(x0)
    out[0] = x
    u = 0.0
    for i in range(n):
        if i % M == 0:
            u = b * x
        x = e_ah * x + force_gain * u + scales.eps * step_sd * noise[i]
        if not math.isfinite(x):
            raise PathDivergenceError(step=i + 1)
        out[i + 1] = x
    return out
