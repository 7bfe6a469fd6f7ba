"""
Exception hierarchy.

Usage errors map to exit status 1, numerical failures on validated input to
exit status 2 (see m4nls.main).
"""

from typing import Any, Optional


class M4NLSError(Exception):
    """Base class for laboratory errors."""


class ConfigError(M4NLSError, ValueError):
    """Invalid run configuration; the message names the offending key."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class FieldFormatError(M4NLSError, ValueError):
    """Malformed field file."""


class NumericalFailure(M4NLSError, RuntimeError):
    """A computation on validated input did not produce an acceptable result."""


class SymbolViolationError(NumericalFailure):
    """The linear symbol gamma|k|^4 + beta|k|^2 + alpha is not positive on the grid."""

    def __init__(self, k: float, value: float):
        super().__init__(
            f"symbol violation: gamma|k|^4 + beta|k|^2 + alpha = {value:.6g} <= 0 at |k| = {k:.6g}"
        )
        self.k = k
        self.value = value


class ConvergenceError(NumericalFailure):
    """An iterative method stopped without meeting its tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EvolutionError(NumericalFailure):
    """Time stepping produced non-finite values; carries the last good state."""

    def __init__(self, message: str, last_state: Any = None, trace: Any = None):
        super().__init__(message)
        self.last_state = last_state
        self.trace = trace


class IdentityCheckError(NumericalFailure):
    """An identity defect exceeded its tolerance during verification."""
