"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (3 for data validation,
4 for numerical failures), so library code should raise the most
specific class that applies.
"""


class LamkitError(Exception):
    """Base class for all package-specific errors."""


class DataValidationError(LamkitError, ValueError):
    """Malformed input data, configuration, or incompatible shapes."""


class NumericalError(LamkitError, RuntimeError):
    """A numerical routine failed to converge or hit a degenerate case."""
