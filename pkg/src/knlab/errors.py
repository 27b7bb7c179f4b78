"""Exception types raised by knlab."""


class KnlabError(Exception):
    """Base class for all knlab errors."""


class ChartTransitionError(KnlabError):
    """A computation left the domain of the surface chart."""


class OutOfRangeError(KnlabError):
    """Points are farther apart than the surface's validity radius."""


class FocalPointError(KnlabError):
    """A Fermi chart or tube was requested beyond the focal distance."""


class NumericalDerivativeError(KnlabError):
    """Finite-difference derivatives failed their convergence check."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedFamilyError(KnlabError):
    """The eigenfunction family is not available on the given surface."""


class PreconditionError(KnlabError):
    """An operation was called outside the regime where its bound applies."""


class ConfigError(KnlabError):
    """Invalid run configuration."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
