"""Model definitions: drift, sampled feedback, diffusion, and their derivatives.

A model is the triple of scalar functions (drift f, feedback u, noise
coefficient sigma) together with the analytic first derivatives of f and u.
All functions must be vectorized: they are called both on Python floats
(inside the deterministic integrators) and on numpy arrays (inside the
path kernels), so implement them with numpy ufuncs or plain arithmetic.

Four example systems ship as builtins:

    example1   f(x) = -x^3 - x          u(x) = -logistic(x)        x0 = -0.07
    example2   f(x) = -x^3 + x          u(x) = -logistic(x)        x0 = -0.07
    example3   f(x) = -3x               u(x) = -0.3166 x           x0 =  0.1
    example4   f(x) = sin(x)/(1+x^2)-3x u(x) = logistic(x) - 5x    x0 =  0.1

with unit noise coefficient throughout.  example2-4 deliberately break one
or more of the sufficient conditions probed by :func:`probe_assumptions`
(non-contractive drift near 0, unbounded feedback); they simulate fine and
the probe reports the violation instead of refusing.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, ProbeError

__all__ = [
    "ModelSpec",
    "AssumptionReport",
    "DerivativeCheck",
    "builtin_model",
    "register_model",
    "get_model",
    "check_derivatives",
    "probe_assumptions",
]

ScalarFn = Callable[[object], object]


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    """One-dimensional control-affine model with analytic derivatives.

    ``drift`` and ``feedback`` are the open-loop drift and the feedback law
    applied through the sample-and-hold channel; ``sigma`` scales the
    Brownian input.  ``x0`` is the shared initial condition of the noisy
    path and its deterministic limit.
    """

    name: str
    drift: ScalarFn
    d_drift: ScalarFn
    feedback: ScalarFn
    d_feedback: ScalarFn
    sigma: ScalarFn
    x0: float

    def closed_loop(self, x):
        """Right-hand side of the limiting closed-loop ODE, drift + feedback."""
        return self.drift(x) + self.feedback(x)

    def with_x0(self, x0: float) -> "ModelSpec":
        return dataclasses.replace(self, x0=float(x0))


@dataclasses.dataclass(frozen=True)
class DerivativeCheck:
    """Result of comparing analytic derivatives against central differences."""

    passed: bool
    max_deviation: float
    worst_point: float


@dataclasses.dataclass(frozen=True)
class AssumptionReport:
    """Finite-box / finite-horizon estimates of the standing regularity constants.

    All values are estimates over the probe set, not global certificates:
    ``lambda_hat`` is the infimum of -(f(x)-f(y))/(x-y) over probe pairs,
    ``L_*_hat`` are maximal difference quotients, ``gamma_hat`` bounds
    |sigma| + |feedback|, and (``alpha_hat``, ``beta_hat``) is a least-squares
    dissipativity fit x*f(x) <= -alpha x^2 + beta with alpha >= 0.
    ``margin`` = lambda_hat/2 - L_feedback_hat; the contractivity condition
    used by the uniform-in-time bounds requires it to be positive.
    ``kernel_sup`` holds sup_t of the exponential-kernel integrals
    int_0^t exp(int_s^t m*(f'+u')(x_r) dr) ds for m = 1, 2 along the
    closed-loop trajectory, estimated on [0, horizon].
    """

    lambda_hat: float
    L_kappa_hat: float
    L_sigma_hat: float
    gamma_hat: float
    alpha_hat: float
    beta_hat: float
    margin: float
    kernel_sup: tuple[float, float]


def _logistic(x):
    return expit(x)


def _d_logistic(x):
    s = expit(x)
    return s * (1.0 - s)


def _unit(x):
    # constant 1 with the shape of x; works for scalars and arrays
    return 0.0 * x + 1.0


def _make_example1() -> ModelSpec:
    return ModelSpec(
        name="example1",
        drift=lambda x: -(x ** 3) - x,
        d_drift=lambda x: -3.0 * x ** 2 - 1.0,
        feedback=lambda x: -_logistic(x),
        d_feedback=lambda x: -_d_logistic(x),
        sigma=_unit,
        x0=-0.07,
    )


def _make_example2() -> ModelSpec:
    return ModelSpec(
        name="example2",
        drift=lambda x: -(x ** 3) + x,
        d_drift=lambda x: -3.0 * x ** 2 + 1.0,
        feedback=lambda x: -_logistic(x),
        d_feedback=lambda x: -_d_logistic(x),
        sigma=_unit,
        x0=-0.07,
    )


_EX3_GAIN = -0.3166  # opaque feedback gain of the linear example


def _make_example3() -> ModelSpec:
    return ModelSpec(
        name="example3",
        drift=lambda x: -3.0 * x,
        d_drift=lambda x: -3.0 + 0.0 * x,
        feedback=lambda x: _EX3_GAIN * x,
        d_feedback=lambda x: _EX3_GAIN + 0.0 * x,
        sigma=_unit,
        x0=0.1,
    )


def _make_example4() -> ModelSpec:
    def drift(x):
        return np.sin(x) / (1.0 + x ** 2) - 3.0 * x

    def d_drift(x):
        q = 1.0 + x ** 2
        return np.cos(x) / q - 2.0 * x * np.sin(x) / q ** 2 - 3.0

    return ModelSpec(
        name="example4",
        drift=drift,
        d_drift=d_drift,
        feedback=lambda x: _logistic(x) - 5.0 * x,
        d_feedback=lambda x: _d_logistic(x) - 5.0,
        sigma=_unit,
        x0=0.1,
    )


_BUILTIN_FACTORIES = {
    "example1": _make_example1,
    "example2": _make_example2,
    "example3": _make_example3,
    "example4": _make_example4,
}

_REGISTRY: dict[str, ModelSpec] = {}


def builtin_model(name: str, x0: float | None = None) -> ModelSpec:
    """Return one of the builtin example models, optionally overriding x0."""
    try:
        spec = _BUILTIN_FACTORIES[name]()
    except KeyError:
        known = ", ".join(sorted(_BUILTIN_FACTORIES))
        raise ConfigurationError("model", f"unknown model {name!r} (builtins: {known})")
    if x0 is not None:
        spec = spec.with_x0(x0)
    return spec


def register_model(spec: ModelSpec, validate: bool = True) -> None:
    """Register a custom model for lookup by name via :func:`get_model`.

    With ``validate`` the analytic derivatives are cross-checked against
    central differences on a default grid before the model is accepted.
    """
    if spec.name in _BUILTIN_FACTORIES:
        raise ConfigurationError("model", f"{spec.name!r} shadows a builtin")
    if validate:
        grid = np.linspace(-3.0, 3.0, 121)
        result = check_derivatives(spec, grid, tol=1e-5)
        if not result.passed:
            raise ConfigurationError(
                "model",
                f"derivative mismatch for {spec.name!r}: deviation "
                f"{result.max_deviation:.3e} at x={result.worst_point!r}",
            )
    _REGISTRY[spec.name] = spec


def get_model(name: str, x0: float | None = None) -> ModelSpec:
    """Look up a model by name: builtins first, then registered models."""
    if name in _BUILTIN_FACTORIES:
        return builtin_model(name, x0)
    if name in _REGISTRY:
        spec = _REGISTRY[name]
        return spec.with_x0(x0) if x0 is not None else spec
    raise ConfigurationError("model", f"unknown model {name!r}")


def check_derivatives(model: ModelSpec, grid, tol: float) -> DerivativeCheck:
    """Compare the analytic derivatives with central finite differences.

    The difference step is 1e-6 * max(1, |x|); the reported deviation at x is
    |fd - analytic| / max(1, |fd|) and the check passes iff the largest
    deviation over the grid (for both drift and feedback derivatives) is
    <= tol.  Non-finite values count as failure at that point.
    """
    if tol <= 0:
        raise ConfigurationError("tol", "tolerance must be positive")
    pts = np.atleast_1d(np.asarray(grid, dtype=float))
    if pts.size == 0:
        raise ConfigurationError("grid", "probe grid must be nonempty")

    worst = 0.0
    worst_x = float(pts[0])
    for fn, dfn in ((model.drift, model.d_drift), (model.feedback, model.d_feedback)):
        step = 1e-6 * np.maximum(1.0, np.abs(pts))
        hi = np.asarray(fn(pts + step), dtype=float)
        lo = np.asarray(fn(pts - step), dtype=float)
        fd = (hi - lo) / (2.0 * step)
        claimed = np.asarray(dfn(pts), dtype=float) + np.zeros_like(pts)
        dev = np.abs(fd - claimed) / np.maximum(1.0, np.abs(fd))
        dev = np.where(np.isfinite(fd) & np.isfinite(claimed), dev, np.inf)
        k = int(np.argmax(dev))
        if dev[k] > worst:
            worst = float(dev[k])
            worst_x = float(pts[k])
    return DerivativeCheck(passed=bool(worst <= tol), max_deviation=worst,
                           worst_point=worst_x)


_LOCAL_PAIR_STEP = 1e-4  # adjacent-point spacing that captures local slopes


def probe_assumptions(model: ModelSpec, probe_box: tuple[float, float] = (-3.0, 3.0),
                      n_probe: int = 601, horizon: float = 64.0,
                      ode_step: float = 0.01) -> AssumptionReport:
    """Estimate the regularity constants of a model over a finite probe set.

    Difference quotients are taken over all ordered pairs of distinct grid
    points plus one adjacent pair per grid point at spacing 1e-4, so both
    global and local slopes are represented (for smooth functions the
    extremal quotients are attained in the local limit).  The kernel
    integrals are computed by integrating, alongside the closed-loop
    trajectory, the auxiliary ODEs  I' = m*(f'+u')(x_t)*I + 1, I(0)=0,
    whose solution at time t equals the inner integral; the supremum is
    taken over the output grid.  O(n_probe^2) memory.
    """
    lo, hi = float(probe_box[0]), float(probe_box[1])
    if not hi > lo:
        raise ConfigurationError("probe_box", "interval must be nondegenerate")
    if n_probe < 2:
        raise ConfigurationError("n_probe", "need at least two probe points")
    if horizon <= 0:
        raise ConfigurationError("horizon", "must be positive")

    x = np.linspace(lo, hi, n_probe)

    fx = np.asarray(model.drift(x), dtype=float) + np.zeros_like(x)
    kx = np.asarray(model.feedback(x), dtype=float) + np.zeros_like(x)
    sx = np.asarray(model.sigma(x), dtype=float) + np.zeros_like(x)
    for vals, what in ((fx, "drift"), (kx, "feedback"), (sx, "sigma")):
        bad = ~np.isfinite(vals)
        if bad.any():
            raise ProbeError(float(x[bad][0]), what)

    off_diag = ~np.eye(n_probe, dtype=bool)
    dx = x[:, None] - x[None, :]
    xs = x + _LOCAL_PAIR_STEP  # adjacent pairs capturing local slopes

    def quotients(fn, values):
        with np.errstate(divide="ignore", invalid="ignore"):
            q = (values[:, None] - values[None, :]) / dx
        shifted = np.asarray(fn(xs), dtype=float) + np.zeros_like(x)
        local = (shifted - values) / _LOCAL_PAIR_STEP
        return q[off_diag], local

    qf, local_f = quotients(model.drift, fx)
    lambda_hat = float(min(np.min(-qf), np.min(-local_f)))

    qk, local_k = quotients(model.feedback, kx)
    L_kappa_hat = float(max(np.max(np.abs(qk)), np.max(np.abs(local_k))))

    qs, local_s = quotients(model.sigma, sx)
    L_sigma_hat = float(max(np.max(np.abs(qs)), np.max(np.abs(local_s))))

    gamma_hat = float(np.max(np.abs(sx) + np.abs(kx)))

    # dissipativity fit x*f(x) ~ -alpha*x^2 + beta, alpha constrained >= 0
    y = x * fx
    design = np.column_stack([-x ** 2, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    alpha_hat, beta_hat = float(coef[0]), float(coef[1])
    if alpha_hat < 0.0:
        alpha_hat = 0.0
        beta_hat = float(np.mean(y))

    margin = lambda_hat / 2.0 - L_kappa_hat

    kernel_sup = _kernel_suprema(model, horizon, ode_step)

    return AssumptionReport(
        lambda_hat=lambda_hat,
        L_kappa_hat=L_kappa_hat,
        L_sigma_hat=L_sigma_hat,
        gamma_hat=gamma_hat,
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        margin=margin,
        kernel_sup=kernel_sup,
    )


def _kernel_suprema(model: ModelSpec, horizon: float, step: float) -> tuple[float, float]:
    """Max over [0, horizon] of the m=1,2 exponential-kernel integrals."""
    n = max(1, int(math.ceil(horizon / step)))
    h = horizon / n

    def rhs(state):
        xv, i1, i2 = state
        a = float(model.d_drift(xv)) + float(model.d_feedback(xv))
        g = float(model.closed_loop(xv))
        return (g, a * i1 + 1.0, 2.0 * a * i2 + 1.0)

    state = (np.float64(model.x0), np.float64(0.0), np.float64(0.0))
    sup1 = 0.0
    sup2 = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            k1 = rhs(state)
            k2 = rhs(tuple(s + 0.5 * h * k for s, k in zip(state, k1)))
            k3 = rhs(tuple(s + 0.5 * h * k for s, k in zip(state, k2)))
            k4 = rhs(tuple(s + h * k for s, k in zip(state, k3)))
            state = tuple(
                s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                for s, a, b, c, d in zip(state, k1, k2, k3, k4)
            )
            if not all(math.isfinite(v) for v in state):
                raise ProbeError(float(state[0]), "kernel integral state")
            sup1 = max(sup1, float(state[1]))
            sup2 = max(sup2, float(state[2]))
    return (sup1, sup2)
