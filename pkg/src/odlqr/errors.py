"""Exception hierarchy shared by all odlqr modules."""


class OdlqrError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(OdlqrError, ValueError):
    """Matrix shapes are inconsistent with each other or with the plant."""


class UnstableError(OdlqrError):
    """A closed loop (or a matrix required to be Schur stable) is not stable.

    For the cost this is the "undefined" case: the Lyapunov equations have
    no PSD solution and J(K, L) is not finite.
    """


class SingularityError(OdlqrError):
    """A matrix that must be inverted is singular or too ill-conditioned."""


class ConvergenceError(OdlqrError):
    """An iterative procedure did not reach its tolerance."""


class ProblemFileError(OdlqrError):
    """A problem file could not be read, parsed, or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
