"""Exception and warning classes raised across the package."""


class StrataSynthError(Exception):
    """Base class for all package errors."""


class PanelFormatError(StrataSynthError, ValueError):
    """An input file or in-memory panel violates the panel contract.

    When raised from a file reader, the message is prefixed with
    ``path:line:`` so the offending row can be located.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
            message = loc + message
        super().__init__(message)


class EmptyDonorPool(StrataSynthError):
    """The requested stratum yields no eligible donors for the target."""


class StratumMismatch(StrataSynthError):
    """The target unit is not in the stratum the estimator requires."""


class SingularGram(StrataSynthError, ValueError):
    """lambda = 0 was requested but the donor Gram matrix is rank deficient."""


class NonFiniteInput(StrataSynthError, ValueError):
    """NaN or infinite values reached the solver."""


class MismatchedSeries(StrataSynthError, ValueError):
    """Two effect series do not share target and post-period index."""


class NoAcceptedPoint(StrataSynthError):
    """No grid value of the hypothesised effect survives the conformal test."""


class SmallDonorPool(UserWarning):
    """Donor pool is smaller than the configured floor."""


class AsymmetricAdjacency(UserWarning):
    """Adjacency input listed a directed edge without its reverse."""


class ScalingWarning(UserWarning):
    """A feature row has zero spread across donors and was left unscaled."""


class GridEndpointWarning(UserWarning):
    """Cross-validation selected a penalty at the edge of the grid."""
