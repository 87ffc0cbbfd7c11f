"""Exception hierarchy shared across the package."""


class FreedeconvError(Exception):
    """Base class for all errors raised by this package."""


# -- measure ----------------------------------------------------------------

class DivisionNearPole(FreedeconvError):
    """Evaluation point is within roundoff distance of a support point."""


class EmptySpectrum(FreedeconvError):
    """Operation requires at least one sample value."""


# -- transform --------------------------------------------------------------

class NewtonDiverged(FreedeconvError):
    """Newton iteration exhausted max_iter or the residual blew up."""


class PoleCollision(FreedeconvError):
    """A Newton iterate landed on (or numerically at) a support point."""


class ZeroFirstMoment(FreedeconvError):
    """S-transform machinery needs a nonzero first moment for its start point."""


class ZeroValue(FreedeconvError):
    """Logarithm branch tracking hit an exact zero."""


class BranchJump(FreedeconvError):
    """Consecutive phase gap >= pi: contour too coarse or it crosses a zero."""


# -- eigenmatrix ------------------------------------------------------------

class DegenerateInterval(FreedeconvError):
    """Parameter interval has (numerically) zero width."""


class KernelEvaluationFailed(FreedeconvError):
    """Kernel returned a non-finite value on the contour x Chebyshev grid."""


class NormBoundUnreachable(FreedeconvError):
    """No threshold in the ladder kept the eigenmatrix norm under the bound."""


class RankDeficient(FreedeconvError):
    """Data matrix has fewer usable singular values than requested spikes."""


class TooFewValid(FreedeconvError):
    """Fewer pencil eigenvalues passed the imaginary-part test than requested."""


class IllConditionedLS(FreedeconvError):
    """Weight design matrix is numerically singular (coincident locations?)."""


class NoClearGap(FreedeconvError):
    """Singular-value sequence has no gap large enough to call a spike count."""


class DegenerateTruncation(UserWarning):
    """Truncation order fell on a (near-)tied pair of singular values."""


# -- rmt --------------------------------------------------------------------

class NonPositiveMeasure(FreedeconvError):
    """Multiplicative ensembles need strictly positive atom locations."""


class EigensolveFailed(FreedeconvError):
    """Dense symmetric eigendecomposition did not converge."""


# -- pipeline / cli ---------------------------------------------------------

class NormalizationViolation(FreedeconvError):
    """Family normalization does not match the deconvolution mode."""


class ConfigError(FreedeconvError):
    """Experiment configuration failed to parse or validate."""
