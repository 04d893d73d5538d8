"""
Exception hierarchy shared by all erpspeller modules.
"""


class SpellerError(Exception):
    """Base class for every error raised by erpspeller."""


class ValidationError(SpellerError, ValueError):
    """An input was rejected before any work was done."""


class ContainerError(ValidationError):
    """A session container or model file could not be read or written.

    Args:
        code (str): Stable machine-readable reason, e.g. ``payload_size_mismatch``
        message (str): Human-readable description
    """

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code

    def __str__(self):
        return f"[{self.code}] {super().__str__()}"


class ClassifierError(SpellerError):
    """Training data cannot support a classifier."""
