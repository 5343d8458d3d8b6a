"""Exception types shared by the estimation suites, the harness, and the CLI.

Each class carries a short machine-readable ``code`` that the CLI prints
alongside the message (estimator failures exit with status 3, configuration
and parse failures with status 2).
"""


class RrtlsError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class ModelInvalidError(RrtlsError):
    """A measurement model violates its invariants (e.g. rank-deficient H)."""

    code = "model-invalid"


class SingularModelError(RrtlsError):
    """The design matrix is numerically rank deficient for a solve."""

    code = "singular-model"


class NonUniqueTlsError(RrtlsError):
    """The augmented matrix has no strictly smallest singular value."""

    code = "nonunique-tls"


class DegenerateSolutionError(RrtlsError):
    """The corrected system matrix is rank deficient; no parameter estimate."""

    code = "degenerate-solution"


class InsufficientDataError(RrtlsError):
    """A statistical verifier was given too few samples."""

    code = "insufficient-data"


class ConfigError(RrtlsError):
    """A configuration or input file could not be parsed or validated."""

    code = "config"
