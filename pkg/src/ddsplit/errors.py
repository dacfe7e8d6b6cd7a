"""Exception types shared across the library."""


class DDSplitError(Exception):
    """Base class for all library-specific errors."""


class InvalidExtent(DDSplitError, ValueError):
    """Upper extent does not exceed lower extent on some axis."""


class TooCoarse(DDSplitError, ValueError):
    """Grid needs at least three nodes per axis."""


class GridMismatch(DDSplitError, ValueError):
    """Operands live on different grids."""


class SingularOperator(DDSplitError, RuntimeError):
    """A cached factorization failed; cannot occur for a valid grid."""


class InfeasibleLayout(DDSplitError, ValueError):
    """Requested decomposition does not fit on the grid."""


class UncoveredNode(DDSplitError, RuntimeError):
    """A node or face midpoint is not covered by any subdomain."""


class InvalidCoefficient(DDSplitError, ValueError):
    """Coefficient-map parameters outside the admissible range."""


class InvalidStep(DDSplitError, ValueError):
    """Resolvent step size must be strictly positive."""


class StepTooLarge(DDSplitError, ValueError):
    """Perturbed schemes need h < 1/M for a positive shift constant M."""


class NonConvergence(DDSplitError, RuntimeError):
    """Newton and the fixed-point fallback both ran out of iterations.

    Carries the best iterate and its residual so callers can report
    diagnostics before aborting an experiment.
    """

    def __init__(self, message, best=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class IntegrationError(DDSplitError, RuntimeError):
    """A time step failed; records the step index and time reached."""

    def __init__(self, message, step, time):
        super().__init__(message)
        self.step = step
        self.time = time


class ReferenceUnavailable(DDSplitError, ValueError):
    """The requested reference solution cannot be built."""


class InvalidParams(DDSplitError, ValueError):
    """Self-similar profile parameters out of range."""


class InvalidConfig(DDSplitError, ValueError):
    """Experiment configuration failed validation."""
