"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes (see cli.py): configuration
problems exit 2, data problems exit 3, numerical failures exit 4.
"""

from __future__ import annotations


class StreamVsrError(Exception):
    """Base class for all package-raised errors."""


class ConfigError(StreamVsrError):
    """Invalid or inconsistent configuration (unknown key, bad value, bad combination)."""


class DataError(StreamVsrError):
    """Missing, malformed, or inconsistent input data."""


class ShapeMismatchError(DataError):
    """Tensor operands have incompatible shapes or dtypes."""


class NumericalError(StreamVsrError):
    """A numerical invariant was violated (non-finite values, divergence)."""


class NonFiniteError(NumericalError):
    """An operation produced NaN or infinity."""
