"""Exception types shared across the package."""

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Inconsistent or malformed configuration.

    ``key`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class RankError(np.linalg.LinAlgError):
    """A matrix that must be full rank is (numerically) rank deficient.

    ``block`` is the combiner frame index for whitening failures and
    ``support`` the offending column set for least-squares failures.
    """

    def __init__(self, message, block=None, support=None):
        super().__init__(message)
        self.block = block
        self.support = support


class FormatError(ValueError):
    """A serialized grid or batch file is truncated or not in the expected format."""
