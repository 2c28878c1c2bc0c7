"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration problems
exit with 2, diverged paths with 3, statistics preconditions with 4.
"""

from __future__ import annotations


class SampledSdeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SampledSdeError):
    """Invalid parameter or model configuration.

    ``field`` names the offending input so error messages can point at it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PathDivergenceError(SampledSdeError):
    """A simulated path produced a non-finite value.

    ``step`` is the first grid index at which the bad value was observed
    (for ensembles, detection happens at output resolution, so the true
    onset may be up to one output stride earlier).
    """

    def __init__(self, step: int, path_index: int | None = None,
                 seed: int | None = None):
        self.step = step
        self.path_index = path_index
        self.seed = seed
        where = f"step {step}"
        if path_index is not None:
            where += f", path {path_index}"
        if seed is not None:
            where += f", master seed {seed}"
        super().__init__(f"path diverged (non-finite state) at {where}")


class ProbeError(SampledSdeError):
    """A model function returned a non-finite value inside the probe box."""

    def __init__(self, point: float, what: str):
        self.point = point
        super().__init__(f"{what} is non-finite at probe point {point!r}")


class FitError(SampledSdeError):
    """Rate-fit preconditions not met (too few points or nonpositive errors)."""
