"""
Utilities module for the 4NLS laboratory.
"""

from m4nls.utils.logger import logger
from m4nls.utils.errors import (
    M4NLSError,
    ConfigError,
    FieldFormatError,
    NumericalFailure,
)

__all__ = [
    "logger",
    "M4NLSError",
    "ConfigError",
    "FieldFormatError",
    "NumericalFailure",
]
