"""Exception hierarchy shared by every module."""


class MrtaError(Exception):
    """Base class for errors raised by robust_mrta."""


class InvalidArgument(MrtaError, ValueError):
    """Inputs with inconsistent dimensions or out-of-domain values."""


class SolverError(MrtaError):
    """A QP/MIQP solve did not produce an optimal point."""


class FactorizationError(MrtaError):
    """The GP Gram matrix is not positive definite."""


class ScenarioError(MrtaError):
    """A scenario file failed schema validation."""
