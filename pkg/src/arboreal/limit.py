"""Closed-form quantities of the infinite-volume wired measure.

All of these are exact in the limit of growing wired balls. The cylinder
formula needs the edge set to be connected and to contain an edge at the root;
:func:`limit_marginal_prob` lifts that restriction by adding the missing spine
edges and summing them out.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ParameterError
from .params import Params, Regime
from .tree import Edge, ROOT, UnionFind, boundary_edge_sets, edge_set_connected

__all__ = [
    "CylinderSpec",
    "q_factor",
    "boundary_classes",
    "limit_cylinder_prob",
    "limit_marginal_prob",
    "theta",
    "restricted_finiteness_prob",
    "conditional_no_survival",
    "eta_probabilities",
]


@dataclass(frozen=True)
class CylinderSpec:
    """Edge set ``B`` with its open subset ``eta``.

    ``B`` must be connected and contain an edge at the root; the empty spec is
    also accepted and describes the sure event.
    """

    k: int
    B: frozenset
    eta: frozenset
    boundary: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        B = frozenset(e.validate(self.k) for e in self.B)
        eta = frozenset(self.eta)
        if not eta <= B:
            raise ParameterError("open edges must be a subset of B")
        if B:
            if not any(e.lower == ROOT for e in B):
                raise ParameterError("B must contain an edge adjacent to the root")
            if not edge_set_connected(B):
                raise ParameterError("B must be connected")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "boundary", boundary_edge_sets(self.k, B)[0] if B else frozenset())

    @classmethod
    def from_states(cls, k: int, states: Mapping[Edge, bool]) -> "CylinderSpec":
        return cls(k, frozenset(states), frozenset(e for e, s in states.items() if s))

    @classmethod
    def single(cls, k: int, edge: Edge, is_open: bool = True) -> "CylinderSpec":
        return cls.from_states(k, {edge: is_open})

    def states(self) -> dict[Edge, bool]:
        return {e: e in self.eta for e in sorted(self.B)}

    def extend(self, f: Edge, is_open: bool) -> "CylinderSpec":
        if f in self.B:
            raise ParameterError(f"{f} is already in B")
        states = self.states()
        states[f] = is_open
        return CylinderSpec.from_states(self.k, states)

    @property
    def max_depth(self) -> int:
        return max((e.depth for e in self.B), default=0)


def q_factor(m: int, lam: float) -> float:
    """``lam**m + m * (1 - lam) * lam**(m - 1)``."""
    if m < 0:
        raise ParameterError(f"m must be non-negative, got {m}")
    if m == 0:
        return 1.0
    if lam == 1.0:
        return 1.0
    return lam ** m + m * (1.0 - lam) * lam ** (m - 1)


def boundary_classes(spec: CylinderSpec) -> list[int]:
    """Sizes of the classes of ``dB`` whose lower endpoints are joined inside ``eta``.

    Sizes are returned in decreasing order.
    """
    if not isinstance(spec, CylinderSpec):
        raise ParameterError("expected a CylinderSpec")
    verts: dict = {}
    for e in spec.B | spec.boundary:
        for v in e.endpoints():
            verts.setdefault(v, len(verts))
    uf = UnionFind(len(verts))
    for e in spec.eta:
        uf.union(verts[e.lower], verts[e.upper])
    sizes: dict[int, int] = {}
    for e in spec.boundary:
        r = uf.find(verts[e.lower])
        sizes[r] = sizes.get(r, 0) + 1
    return sorted(sizes.values(), reverse=True)


def _percolation_prob(p: float, n_open: int, n_closed: int) -> float:
    return p ** n_open * (1.0 - p) ** n_closed


def limit_cylinder_prob(params: Params, spec: CylinderSpec) -> float:
    """Limiting probability that the configuration on ``B`` equals ``eta``."""
    if spec.k != params.k:
        raise ParameterError("spec and params disagree on k")
    if params.regime is Regime.WUSF:
        raise ParameterError("beta = inf is only supported by the samplers")
    if not spec.B:
        return 1.0
    n_open = len(spec.eta)
    n_closed = len(spec.B) - n_open
    perc = _percolation_prob(params.p_beta, n_open, n_closed)
    if params.is_percolation:
        return perc
    lam, k = params.lam, params.k
    num = 1.0
    for size in boundary_classes(spec):
        num *= q_factor(size, lam)
    den = q_factor(k, lam) * q_factor(k - 1, lam) ** len(spec.B)
    return num / den * perc


def _spine(edges) -> set[Edge]:
    out = set()
    for e in edges:
        v = e.upper
        while not v.is_root:
            out.add(Edge.from_upper(v))
            v = v.parent()
    return out


def limit_marginal_prob(params: Params, states: Mapping[Edge, bool], max_extra: int = 16) -> float:
    """Limiting probability of an arbitrary finite cylinder event.

    The request is completed to the union of root paths of its edges (a valid
    ``B``) and the added edges are summed over.
    """
    k = params.k
    states = {e.validate(k): bool(s) for e, s in states.items()}
    if not states:
        return 1.0
    extra = sorted(_spine(states) - set(states))
    if len(extra) > max_extra:
        raise ParameterError(f"marginalizing {len(extra)} spine edges exceeds max_extra={max_extra}")
    total = 0.0
    for bits in itertools.product((False, True), repeat=len(extra)):
        full = dict(states)
        full.update(zip(extra, bits))
        total += limit_cylinder_prob(params, CylinderSpec.from_states(k, full))
    return total


def _x(params: Params) -> float:
    return params.beta * (params.k - 2)


def theta(params: Params) -> float:
    """Limiting probability that the root lies on an infinite open path.

    Zero below the critical point, where the measure is subcritical or critical
    percolation, and one for the wired uniform spanning forest.
    """
    if params.regime is Regime.WUSF:
        return 1.0
    if params.beta < params.beta_c or params.regime is Regime.CRITICAL:
        return 0.0
    x, k = _x(params), params.k
    return (x * k - k) / (x * k - 1)


def _require_supercritical_or_critical(params: Params) -> None:
    if params.regime is Regime.SUBCRITICAL:
        raise ParameterError(f"requires beta >= beta_c = {params.beta_c}, got {params.beta}")


def restricted_finiteness_prob(params: Params, size_e1: int, size_e2: int) -> float:
    """Probability that the root cluster restricted to the ``E2`` branches is finite."""
    _require_supercritical_or_critical(params)
    k = params.k
    if size_e1 < 0 or size_e2 < 1 or size_e1 + size_e2 != k:
        raise ParameterError(f"({size_e1}, {size_e2}) is not a split of the {k} root edges with E2 nonempty")
    if params.regime is Regime.WUSF:
        return size_e1 / k
    if params.regime is Regime.CRITICAL:
        return 1.0
    x = _x(params)
    return (x * size_e1 + size_e2 - 1) / (x * k - 1)


def conditional_no_survival(params: Params) -> float:
    """Probability that the root survives given that one root branch does not carry it.

    This is also the inclusion probability of a non-root vertex in the random
    vertex set of the supercritical construction.
    """
    _require_supercritical_or_critical(params)
    if params.regime is Regime.WUSF:
        return 1.0
    if params.regime is Regime.CRITICAL:
        return 0.0
    x = _x(params)
    return (x - 1) / x


def eta_probabilities(params: Params) -> tuple[float, float]:
    """Inclusion probabilities ``(root, non-root)`` of the random vertex layer."""
    if params.is_percolation:
        return 0.0, 0.0
    return theta(params), conditional_no_survival(params)

