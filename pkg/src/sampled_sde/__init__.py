"""Simulation and error analysis for SDEs driven by sampled-and-held feedback.

The package integrates, on coupled Brownian paths, a noisy state whose
feedback input is updated only at multiples of a sampling period delta, the
closed-loop ODE it approaches as noise size eps and delta vanish, and the
limiting fluctuation SDE that captures the joint sampling/noise correction.
On top of the path kernels sit reproducible Monte Carlo ensembles, error
functionals with confidence intervals, convergence-order fits over noise
ladders, and a CLI that renders tables, delimited data files, and figures.
"""

from .errors import (ConfigurationError, FitError, PathDivergenceError,
                     ProbeError, SampledSdeError)
from .integrate import (MomentCurves, PathBundle, ScaleParams, TimeGrid,
                        exact_linear_path, moment_curves, pi_delta,
                        simulate_path)
from .models import (AssumptionReport, DerivativeCheck, ModelSpec,
                     builtin_model, check_derivatives, get_model,
                     probe_assumptions, register_model)
from .montecarlo import (EnsembleConfig, ErrorStats, GaussianCheck,
                         gaussian_check, run_ensemble)
from .rates import (ExponentRule, LadderSpec, RateFit, RatioRule, fit_rate,
                    render_table, run_ladder)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "ConfigurationError",
    "DerivativeCheck",
    "EnsembleConfig",
    "ErrorStats",
    "ExponentRule",
    "FitError",
    "GaussianCheck",
    "LadderSpec",
    "ModelSpec",
    "MomentCurves",
    "PathBundle",
    "PathDivergenceError",
    "ProbeError",
    "RateFit",
    "RatioRule",
    "SampledSdeError",
    "ScaleParams",
    "TimeGrid",
    "builtin_model",
    "check_derivatives",
    "exact_linear_path",
    "fit_rate",
    "gaussian_check",
    "get_model",
    "moment_curves",
    "pi_delta",
    "probe_assumptions",
    "register_model",
    "render_table",
    "run_ensemble",
    "run_ladder",
    "simulate_path",
]
