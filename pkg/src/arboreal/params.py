"""Model parameters of the wired arboreal gas on the k-regular tree."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import ParameterError

INFINITY = math.inf


class Regime(str, enum.Enum):
    SUBCRITICAL = "SUBCRITICAL"
    CRITICAL = "CRITICAL"
    SUPERCRITICAL = "SUPERCRITICAL"
    WUSF = "WUSF"


def parse_beta(value) -> float:
    """Accept a positive number or the strings ``inf``/``infinity``."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf"):
            return INFINITY
        try:
            value = float(text)
        except ValueError as exc:
            raise ParameterError(f"cannot parse beta {value!r}") from exc
    beta = float(value)
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {value!r}")
    return beta


def _is_critical(k: int, beta: float) -> bool:
    beta_c = 1.0 / (k - 2)
    return beta == beta_c or math.isclose(beta, beta_c, rel_tol=1e-12, abs_tol=0.0)


@dataclass(frozen=True)
class Params:
    """Degree ``k`` and edge weight ``beta`` together with derived constants.

    ``beta`` may be :data:`INFINITY`, which selects the wired uniform spanning
    forest. Every other field is derived in ``__post_init__``.
    """

    k: int
    beta: float
    p_beta: float = field(init=False)
    p_c: float = field(init=False)
    beta_c: float = field(init=False)
    lam: float = field(init=False)
    regime: Regime = field(init=False)

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 3:
            raise ParameterError(f"k must be an integer >= 3, got {self.k!r}")
        k = int(self.k)
        beta = parse_beta(self.beta)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "beta", beta)
        beta_c = 1.0 / (k - 2)
        object.__setattr__(self, "beta_c", beta_c)
        object.__setattr__(self, "p_c", 1.0 / (k - 1))
        if math.isinf(beta):
            object.__setattr__(self, "p_beta", 1.0)
            object.__setattr__(self, "lam", 0.0)
            object.__setattr__(self, "regime", Regime.WUSF)
            return
        object.__setattr__(self, "p_beta", beta / (beta + 1.0))
        if _is_critical(k, beta):
            object.__setattr__(self, "lam", 1.0)
            object.__setattr__(self, "regime", Regime.CRITICAL)
        elif beta < beta_c:
            object.__setattr__(self, "lam", 1.0)
            object.__setattr__(self, "regime", Regime.SUBCRITICAL)
        else:
            object.__setattr__(self, "lam", (k - 1) / ((k - 2) * (1.0 + beta)))
            object.__setattr__(self, "regime", Regime.SUPERCRITICAL)

    @property
    def is_percolation(self) -> bool:
        """True when the wired limit is plain bond percolation at ``p_beta``."""
        return self.regime in (Regime.SUBCRITICAL, Regime.CRITICAL)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "beta": "inf" if math.isinf(self.beta) else self.beta,
            "p_beta": self.p_beta,
            "p_c": self.p_c,
            "beta_c": self.beta_c,
            "lambda": self.lam,
            "regime": self.regime.value,
        }
