"""Exception types raised across the package."""


class GeoSpotError(Exception):
    """Base class for all package errors."""


class DataError(GeoSpotError, ValueError):
    """Input files or in-memory data violate a contract."""


class ConfigError(GeoSpotError, ValueError):
    """Invalid parameter combination."""


class SolverError(GeoSpotError, ArithmeticError):
    """Optimal transport solve failed numerically or was out of scope."""
