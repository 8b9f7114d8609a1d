"""Exception types shared across the package.

CLI exit-code mapping: UsageError -> 1, ValidationError subclasses -> 2,
everything else -> 3.
"""


class EmucalError(Exception):
    """Base class for all package errors."""


class UsageError(EmucalError):
    """Bad command-line invocation or missing input file."""


class ValidationError(EmucalError):
    """Input or state violates a documented contract."""


class DomainError(ValidationError):
    """Value outside the domain of a transform."""


class InvalidTheta(ValidationError):
    """Parameter vector fails range or shape validation."""


class DimensionMismatch(ValidationError):
    """Array shapes inconsistent with the declared parameter space."""


class InfeasibleTurbulence(ValidationError):
    """Coupled turbulence quantities fall outside their plausible ranges."""


class DesignInfeasible(ValidationError):
    """Could not produce a feasible design point within the retry budget."""


class ParseError(ValidationError):
    """Malformed file content (CSV/JSON/TOML)."""


class InvariantViolation(ValidationError):
    """Stored artifact fails its structural invariants on load."""


class EmptyBlock(ValidationError):
    """Matrix block with zero rows or columns where data is required."""


class RankDeficient(ValidationError):
    """Regression design has linearly dependent columns."""


class DegenerateFit(ValidationError):
    """Residual sum of squares at machine-noise level; AIC undefined."""


class ArtifactMismatch(ValidationError):
    """Artifacts from different pipeline runs combined."""


class ConvergenceFailure(EmucalError):
    """Numerical decomposition failed to converge."""


class AllZero(ValidationError):
    """Vector of all zeros where a nonzero entry is required."""


class DegenerateInterval(ValidationError):
    """Interval with zero width where a positive width is required."""


class NonPositiveSigma(ValidationError):
    """Noise standard deviation must be strictly positive."""


class TooFewSamples(ValidationError):
    """Not enough posterior samples for the requested summary."""


class EmptySubset(ValidationError):
    """Region subset for an aggregate is empty."""


class AuditError(EmucalError):
    """Cached chain state disagrees with recomputation from scratch."""
