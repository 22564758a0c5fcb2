"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class ArtaError(Exception):
    exit_code = 1


class ConfigurationError(ArtaError, ValueError):
    """Bad shapes, bad config keys, impossible window sizes."""

    exit_code = 2


class ParseError(ConfigurationError):
    """Malformed CSV / config / model file."""


class NumericError(ArtaError, ArithmeticError):
    """A loss or gradient went non-finite."""

    exit_code = 3


class EvaluationError(ArtaError, ValueError):
    """A metric is undefined for the given labels."""

    exit_code = 4
