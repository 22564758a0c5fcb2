"""Adversarially regularized temporal anomaly detection (ARTA).

A sequence autoencoder detector trained jointly with a sparse temporal
mask generator, plus corruption, metric and stability tooling.
"""

from arta.errors import ArtaError, ConfigurationError, EvaluationError, NumericError, ParseError

__version__ = "0.1.0"

__all__ = [
    "ArtaError",
    "ConfigurationError",
    "EvaluationError",
    "NumericError",
    "ParseError",
    "__version__",
]
