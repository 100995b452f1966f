"""Exception types shared across the package."""


class SgnsError(Exception):
    """Base class for all package errors."""


class ConfigError(SgnsError):
    """A run configuration field is missing, malformed or out of range."""


class MaximizerNotBracketed(SgnsError):
    """The radial concave maximization could not bracket its stationary point.

    Raised by the convex-conjugate evaluation when doubling the search
    interval never produces a sign change of the first-order condition,
    which indicates an ill-posed constitutive family (exponent <= 1 or a
    stress magnitude outside the representable range).
    """


class NegativeDensity(SgnsError):
    """A pressure-law evaluation received a density outside its domain."""


class ResolutionTooLow(SgnsError):
    """Quadrature grid too coarse for the requested mode set (aliasing)."""


class GridMismatch(SgnsError):
    """A grid field does not match the basis quadrature grid."""


class LengthMismatch(SgnsError):
    """A modal coefficient vector does not match the basis size."""


class SolverError(SgnsError):
    """A path failed mid-run; carries the failure time.

    Attributes
    ----------
    t : float
        Simulation time at which the step failed.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NotPositiveDefinite(SolverError):
    """A Gram matrix failed its Cholesky factorization."""


class PositivityLost(SolverError):
    """The discrete density lost strict positivity; reduce dt or refine."""


class CflViolation(SolverError):
    """The configured dt violates the advective/acoustic CFL bound."""


class IncompleteLedger(SgnsError):
    """An energy ledger is missing columns or rows required by a check."""


class WrongBasisFamily(SgnsError):
    """A diagnostic was asked to run on a basis family it does not cover."""


class EmptyCell(SgnsError):
    """A partition cell received no samples."""


class DominationViolated(SgnsError):
    """Sampled integrand values violate the assumed |F| <= G domination."""


class LadderMismatch(SgnsError):
    """Resolution or truncation ladders are inconsistent or too short."""


class MissingArtifact(SgnsError):
    """A run-directory file required by an analysis is absent."""


class ParseError(SgnsError):
    """A run-directory file exists but its contents are malformed."""

