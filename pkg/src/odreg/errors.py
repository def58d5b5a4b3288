"""Exception types shared across the package."""


class SingularUpdateError(RuntimeError):
    """Raised when a rank-one inverse update is numerically singular.

    The caller should rebuild the inverse from the accumulated Gramian by
    direct (pseudo-)inversion.
    """


class DegenerateColumnError(ValueError):
    """Raised when a coordinate update hits a non-positive diagonal entry."""


class EstimationError(RuntimeError):
    """Raised when a fit cannot be completed (singular design, divergence)."""


class ConfigError(ValueError):
    """Raised for invalid configuration files or option values."""


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""
