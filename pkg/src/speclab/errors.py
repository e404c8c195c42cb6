"""Exception types raised across the package.

Every error that signals a violated contract derives from SpeclabError so
callers (and the command line driver) can distinguish bad inputs from bugs.
Validation errors mean the caller handed us an object that fails a documented
precondition; runtime errors mean an algorithm could not finish its job.
"""

from __future__ import annotations


class SpeclabError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SpeclabError, ValueError):
    """A documented precondition on an input was violated."""


class AsymmetricB(ValidationError):
    """Block matrix is not symmetric within tolerance."""


class EntryOutOfRange(ValidationError):
    """Block matrix entry falls outside [0, 1]."""


class BadSimplexVector(ValidationError):
    """Weight vector has a negative entry or does not sum to one."""


class RankDeficiencyAmbiguous(ValidationError):
    """Eigenvalues of the block matrix straddle the rank cutoff band."""


class NotIndefiniteOrthogonal(ValidationError):
    """Matrix does not preserve the indefinite inner product."""


class FormOutOfRange(ValidationError):
    """A latent-position bilinear form is not a probability within tolerance."""


class TooLargeForOracle(ValidationError):
    """Dense reference solver refused a matrix above its size cap."""


class DegenerateGram(ValidationError):
    """Latent positions are numerically rank deficient."""


class SingularDelta(ValidationError):
    """Second-moment matrix of the mixture is numerically singular."""


class NotSimpleSpectrum(ValidationError):
    """Population eigenvalues are not all simple, so the law does not apply."""


class RequiresPositiveSemidefinite(ValidationError):
    """Operation is defined only for models with no negative-sign directions."""


class DegenerateVariance(ValidationError):
    """A variance that must be positive is zero or negative."""


class NoConvergence(SpeclabError, RuntimeError):
    """Iterative eigensolver hit its iteration cap before converging.

    The partial result (best available eigenpairs and residuals) is attached
    so callers can inspect or retry with a larger budget.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class AmbiguousMatching(SpeclabError, RuntimeError):
    """Two eigenvalue assignments have nearly identical cost.

    Never raised by the matcher itself (it logs and falls back to identity);
    available for callers that want to escalate instead.
    """
