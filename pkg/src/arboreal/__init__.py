"""Exact computation and sampling for the arboreal gas on regular trees with wired boundary."""

from .errors import ArborealError, DPError, OracleScaleError, ParameterError
from .params import INFINITY, Params, Regime

__version__ = "0.1.0"

__all__ = [
    "ArborealError",
    "DPError",
    "OracleScaleError",
    "ParameterError",
    "INFINITY",
    "Params",
    "Regime",
    "__version__",
]
