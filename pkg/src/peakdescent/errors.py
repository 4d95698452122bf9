"""Exception types shared across the solver modules."""


class SolverError(Exception):
    """Base class for runtime solver failures."""


class DomainViolation(SolverError):
    """The input left the admissible set (a cone component is numerically zero)."""


class DegenerateRay(SolverError):
    """The inner maximization ended on the cone boundary (a ray coordinate hit 0).

    ``vanished`` holds the indices of the components whose ray coordinate
    collapsed; the peak selection is undefined there.
    """

    def __init__(self, message, vanished=()):
        super().__init__(message)
        self.vanished = tuple(vanished)


class SpectralGapViolation(SolverError):
    """An eigenvalue of the linear operator sits within tolerance of zero."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = float(eigenvalue)


class NumericFailure(SolverError):
    """A numerical kernel broke down (solver, eigensolver, overflow)."""


class StepsizeUnderflow(SolverError):
    """No admissible stepsize was found above the configured floor."""


class ConfigError(Exception):
    """A run configuration failed to parse or validate."""
