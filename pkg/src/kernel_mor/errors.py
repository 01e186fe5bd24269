"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`KernelMORError`, so the CLI can map numerical failures to exit
code 1 and configuration problems to exit code 2.
"""


class KernelMORError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(KernelMORError, ValueError):
    pass


class NotSymmetricError(KernelMORError, ValueError):
    pass


class NotPositiveDefiniteError(KernelMORError):
    def __init__(self, min_eigenvalue, message=None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            message
            or f"matrix is not positive definite even after jitter "
            f"(smallest eigenvalue {self.min_eigenvalue:.3e})"
        )


class IntegrationDivergedError(KernelMORError):
    """A simulated state became non-finite."""

    def __init__(self, time, run=None):
        self.time = float(time)
        self.run = run
        where = f" in run {run!r}" if run is not None else ""
        super().__init__(f"integration diverged at t={self.time:.6g}s{where}")

    def annotate(self, run):
        return IntegrationDivergedError(self.time, run=run)


class DegenerateSystemError(KernelMORError):
    """Balancing found no nonzero Hankel value."""


class RankDeficiencyError(KernelMORError):
    pass


class DegenerateExpansionError(KernelMORError):
    """The Jacobian of the reduction map vanishes at the expansion point."""


class UnsupportedModeError(KernelMORError):
    pass


class ConfigError(KernelMORError):
    """Invalid pipeline configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingArtifactError(KernelMORError):
    def __init__(self, path, stage):
        self.path = path
        self.stage = stage
        super().__init__(
            f"missing upstream artifact {path} (run the '{stage}' stage first)"
        )


class StaleArtifactError(KernelMORError):
    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(message)
