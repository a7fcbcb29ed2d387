"""Exception hierarchy shared by the library, the CLI and the web service"""
from typing import Optional


class UCMABError(Exception):
    """Base class for every error raised by ucmab"""


class DomainError(UCMABError, ValueError):
    """A numeric input lies outside the domain of an operation"""


class ConfigurationError(UCMABError):
    """A configuration or reward specification is invalid"""


class SpecificationError(ConfigurationError):
    """An environment surface produces probabilities outside [0, 1]"""


class FitError(UCMABError):
    """Training data cannot produce an uplift model"""


class ModelStateError(UCMABError):
    """A model or controller was used before it was ready"""


class IngestionError(UCMABError):
    """A dataset file does not match the expected schema"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
