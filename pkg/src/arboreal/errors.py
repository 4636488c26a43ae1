"""Exception types shared across the package."""


class ArborealError(Exception):
    """Base class for all errors raised by :mod:`arboreal`."""


class ParameterError(ArborealError, ValueError):
    """Invalid model parameters, addresses, or cylinder specifications."""


class OracleScaleError(ArborealError):
    """A brute-force oracle was asked to run beyond its size cap."""


class DPError(ArborealError, FloatingPointError):
    """A dynamic-programming pass produced a non-finite intermediate value."""
