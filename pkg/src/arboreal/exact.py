"""Exact finite-volume computations on wired balls.

Two independent routes to the same numbers:

* :func:`enumerate_forests` walks every edge subset of a small multigraph and
  keeps the acyclic ones (brute force, capped at 24 edges by default).
* :func:`dp_partition` runs the bottom-up recursion over the tree. For every
  vertex ``u`` it tracks ``A_u`` and ``B_u``, the weights of forest
  configurations below ``u`` with ``u`` disconnected from, respectively
  connected to, the boundary vertex. Vertices at equal depth of a wired ball
  are interchangeable, so the table is stored per depth as the normalized
  ratio ``x_d = A / (A + B)`` plus a log scale.

Pinned variants of the recursion (:func:`exact_cylinder_prob`) carry weights
relative to the unpinned ones, which keeps every quantity of order one even
when ``log Z`` is astronomically large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import DPError, OracleScaleError, ParameterError
from .params import parse_beta
from .tree import Edge, Graph, TreeAddress, WiredBall, EdgeConfig, level_offset

__all__ = [
    "ForestEnumeration",
    "enumerate_forests",
    "edges_event",
    "disconnected_event",
    "DPTable",
    "dp_partition",
    "recursion_F",
    "iterate_F",
    "exact_cylinder_prob",
    "dp_exact_sample",
    "dp_exact_sample_batch",
]

DEFAULT_EDGE_CAP = 24
_CHUNK_BITS = 16


def _finite_beta(beta) -> float:
    beta = parse_beta(beta)
    if math.isinf(beta):
        raise ParameterError("exact computations need a finite beta")
    return beta


# --------------------------------------------------------------------------
# brute-force enumeration


@dataclass
class ForestEnumeration:
    """All forests of a small multigraph, with their component labels.

    ``masks[i]`` encodes forest ``i`` (bit ``j`` set iff edge ``j`` is open),
    ``labels[i, v]`` names the component of vertex ``v`` in that forest.
    """

    universe: object
    beta: float
    masks: np.ndarray
    n_open: np.ndarray
    labels: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.universe.n_edges

    @property
    def count_by_size(self) -> np.ndarray:
        """Number of forests with exactly ``m`` edges, indexed by ``m``."""
        return np.bincount(self.n_open, minlength=self.n_edges + 1)

    def weights(self, beta: float | None = None) -> np.ndarray:
        b = self.beta if beta is None else _finite_beta(beta)
        return b ** self.n_open.astype(float)

    def partition(self, beta: float | None = None) -> float:
        b = self.beta if beta is None else _finite_beta(beta)
        counts = self.count_by_size
        return math.fsum(int(c) * b ** m for m, c in enumerate(counts) if c)

    @property
    def z(self) -> float:
        return self.partition()

    @property
    def bits(self) -> np.ndarray:
        shifts = np.arange(self.n_edges, dtype=np.uint64)
        return ((self.masks[:, None] >> shifts) & np.uint64(1)).astype(bool)

    def event_weight(self, predicate: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        """Sum of ``beta**|eta|`` over forests satisfying ``predicate(bits, labels)``."""
        hit = np.asarray(predicate(self.bits, self.labels), dtype=bool)
        return math.fsum(self.weights()[hit])

    def prob(self, predicate) -> float:
        return self.event_weight(predicate) / self.z

    def configs(self) -> list[EdgeConfig]:
        return [EdgeConfig(self.universe, row) for row in self.bits]


def edges_event(states: Mapping[int, bool]):
    """Predicate: the listed edge indices have the given open/closed states."""
    items = [(int(i), bool(s)) for i, s in states.items()]

    def predicate(bits, labels):
        hit = np.ones(bits.shape[0], dtype=bool)
        for i, s in items:
            hit &= bits[:, i] == s
        return hit

    return predicate


def disconnected_event(u: int, v: int):
    """Predicate: vertices ``u`` and ``v`` lie in different components."""

    def predicate(bits, labels):
        return labels[:, u] != labels[:, v]

    return predicate


def enumerate_forests(universe, beta, cap: int = DEFAULT_EDGE_CAP) -> ForestEnumeration:
    """Enumerate every forest of ``universe`` (a graph, wired ball or tree ball)."""
    beta = _finite_beta(beta)
    g: Graph = universe.graph()
    n_e, n_v = g.n_edges, g.n_vertices
    if n_e > cap:
        raise OracleScaleError(f"{n_e} edges exceed the enumeration cap of {cap}")
    if n_e > 63:
        raise OracleScaleError("enumeration supports at most 63 edges")
    ends = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
    total = 1 << n_e
    chunk = 1 << min(_CHUNK_BITS, n_e)
    keep_masks, keep_labels = [], []
    label_dtype = np.int16 if n_v < 2 ** 15 else np.int32
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        labels = np.tile(np.arange(n_v, dtype=label_dtype), (masks.size, 1))
        acyclic = np.ones(masks.size, dtype=bool)
        for j, (u, v) in enumerate(ends):
            is_open = ((masks >> np.uint64(j)) & np.uint64(1)).astype(bool) & acyclic
            lu, lv = labels[:, u], labels[:, v]
            acyclic &= ~(is_open & (lu == lv))
            merge = is_open & (lu != lv)
            if merge.any():
                rows = np.flatnonzero(merge)
                sub = labels[rows]
                labels[rows] = np.where(sub == lv[rows, None], lu[rows, None], sub)
        keep_masks.append(masks[acyclic])
        keep_labels.append(labels[acyclic])
    masks = np.concatenate(keep_masks)
    labels = np.concatenate(keep_labels)
    n_open = np.zeros(masks.size, dtype=np.int64)
    for j in range(n_e):
        n_open += ((masks >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
    return ForestEnumeration(universe, beta, masks, n_open, labels)


# --------------------------------------------------------------------------
# dynamic programming


def _slot_weights(beta: float, x_child: float) -> tuple[float, float]:
    """Weights of one child slot relative to the child's total subtree weight.

    ``a``: the parent is not connected to the boundary through this slot,
    ``b``: it is (the edge is open and the child is connected).
    """
    return 1.0 + beta * x_child, beta * (1.0 - x_child)


@dataclass(frozen=True)
class DPTable:
    """Per-depth solution of the recursion on a wired ball.

    ``x[d]``: probability that a depth ``d`` vertex is disconnected from the
    boundary using only edges below it. ``log_weight[d]``: ``log(A + B)`` for
    the subtree below a depth ``d`` vertex. ``q[d]``: disconnection probability
    of ``e-`` in ``G(e)`` for an edge whose upper endpoint has depth ``d``;
    index ``R + 1`` belongs to the boundary edges and ``q[0]`` is unused.
    """

    k: int
    radius: int
    beta: float
    x: np.ndarray
    log_norm: np.ndarray
    log_weight: np.ndarray
    q: np.ndarray

    @property
    def p(self) -> float:
        return self.beta / (1.0 + self.beta)

    @property
    def log_z(self) -> float:
        return float(self.log_weight[0])

    @property
    def z(self) -> float:
        """Partition function; overflows to ``inf`` for large balls, use :attr:`log_z`."""
        return math.exp(self.log_z)

    def root_edge_q(self) -> float:
        return float(self.q[1])

    def q_edge(self, e: Edge) -> float:
        if e.depth > self.radius + 1:
            raise ParameterError(f"edge {e} lies outside the wired ball")
        return float(self.q[e.depth])

    def log_A(self, v: TreeAddress) -> float:
        d = v.depth
        return float(self.log_weight[d] + math.log(self.x[d]))

    def log_B(self, v: TreeAddress) -> float:
        d = v.depth
        xb = 1.0 - self.x[d]
        return float(self.log_weight[d] + math.log(xb)) if xb > 0 else -math.inf


def dp_partition(ball: WiredBall, beta) -> DPTable:
    """Solve the bottom-up recursion on ``ball`` for edge weight ``beta``."""
    beta = _finite_beta(beta)
    if not isinstance(ball, WiredBall):
        raise ParameterError("dp_partition expects a WiredBall")
    k, R = ball.k, ball.radius
    p = beta / (1.0 + beta)
    x = np.empty(R + 1)
    log_norm = np.empty(R + 1)
    log_weight = np.empty(R + 2)
    log_weight[R + 1] = 0.0  # a boundary slot: A = 0, B = 1
    x_child = 0.0
    for d in range(R, -1, -1):
        m = k if d == 0 else k - 1
        a, b = _slot_weights(beta, x_child)
        ratio = m * b / a
        x[d] = 1.0 / (1.0 + ratio)
        log_norm[d] = m * math.log(a) + math.log1p(ratio)
        log_weight[d] = m * log_weight[d + 1] + log_norm[d]
        x_child = x[d]
    q = np.full(R + 2, np.nan)
    q[1: R + 1] = (1.0 - p) + p * x[1:]
    q[R + 1] = 1.0 - p
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(log_weight))):
        raise DPError("non-finite value in the recursion")
    for arr in (x, log_norm, log_weight, q):
        arr.flags.writeable = False
    return DPTable(k, R, beta, x, log_norm, log_weight, q)


def recursion_F(k: int, beta, q: float) -> float:
    """One step of the disconnection recursion with ``k - 1`` equal children."""
    beta = _finite_beta(beta)
    p = beta / (1.0 + beta)
    return (1.0 - p) + p / (1.0 - (k - 1) + (k - 1) / q)


def iterate_F(k: int, beta, q0: float, steps: int) -> list[float]:
    """``[q0, F(q0), F(F(q0)), ...]`` with ``steps`` applications of the recursion."""
    if not 0.0 < q0 <= 1.0:
        raise ParameterError(f"q0 must lie in (0, 1], got {q0}")
    if steps < 0:
        raise ParameterError("steps must be non-negative")
    out = [float(q0)]
    for _ in range(steps):
        out.append(recursion_F(k, beta, out[-1]))
    return out


def _pinned_states(ball: WiredBall, spec) -> dict[Edge, bool]:
    if hasattr(spec, "B"):
        if spec.k != ball.k:
            raise ParameterError("spec and ball disagree on k")
        states = {e: e in spec.eta for e in spec.B}
    else:
        states = {e.validate(ball.k): bool(s) for e, s in spec.items()}
    for e in states:
        if e.depth > ball.radius:
            raise ParameterError(
                f"edge {e} reaches depth {e.depth}; pinned edges must be internal, d(o, e+) <= R = {ball.radius}"
            )
    return states


def exact_cylinder_prob(ball: WiredBall, beta, spec) -> float:
    """Finite-volume probability that the edges of ``spec.B`` are in state ``spec.eta``.

    ``spec`` is a :class:`~arboreal.limit.CylinderSpec` or a mapping from edges
    to open/closed states. Open pinned edges contribute their weight and fuse
    connectivity; closed pinned edges are deleted.
    """
    table = dp_partition(ball, beta)
    states = _pinned_states(ball, spec)
    if not states:
        return 1.0
    beta = table.beta
    k = ball.k

    special: set[TreeAddress] = set()
    for e in states:
        v = e.lower
        while True:
            special.add(v)
            if v.is_root:
                break
            v = v.parent()

    rel: dict[TreeAddress, tuple[float, float]] = {}
    for v in sorted(special, key=lambda a: (-a.depth, a.path)):
        d = v.depth
        m = v.n_children(k)
        slots = []
        for i in range(m):
            c = v.child(i)
            ac, bc = rel[c] if c in rel else (table.x[d + 1], 1.0 - table.x[d + 1])
            state = states.get(Edge(v, i))
            if state is None:
                slots.append((ac + bc + beta * ac, beta * bc))
            elif state:
                slots.append((beta * ac, beta * bc))
            else:
                slots.append((ac + bc, 0.0))
        A = math.prod(a for a, _ in slots)
        B = 0.0
        for i, (_, b) in enumerate(slots):
            if b:
                B += b * math.prod(a for j, (a, _) in enumerate(slots) if j != i)
        norm = math.exp(table.log_norm[d])
        rel[v] = (A / norm, B / norm)
    a_o, b_o = rel[TreeAddress()]
    out = a_o + b_o
    if not math.isfinite(out):
        raise DPError("non-finite pinned weight")
    return float(out)


# --------------------------------------------------------------------------
# exact sampling


def dp_exact_sample_batch(ball: WiredBall, beta, n: int, seed=None) -> np.ndarray:
    """``n`` independent exact samples as an ``(n, ball.n_edges)`` boolean array.

    The root's connection state is drawn from its marginal; then, level by
    level, a connected vertex picks its connecting slot uniformly (all slots of
    a vertex are exchangeable) and every other slot draws one uniform against
    the cumulative weights (open with the child disconnected, closed with the
    child disconnected, closed with the child connected).
    """
    table = dp_partition(ball, beta)
    beta = table.beta
    k, R = ball.k, ball.radius
    rng = np.random.default_rng(seed)
    out = np.zeros((n, ball.n_edges), dtype=bool)
    conn = (rng.random((n, 1)) >= table.x[0])
    for d in range(R + 1):
        m = k if d == 0 else k - 1
        x_child = table.x[d + 1] if d < R else 0.0
        width = conn.shape[1]
        pick = np.minimum((rng.random((n, width)) * m).astype(np.int64), m - 1)
        u = rng.random((n, width, m))
        denom = 1.0 + beta * x_child
        t_open = beta * x_child / denom
        t_closed_disc = t_open + x_child / denom
        is_connector = conn[:, :, None] & (pick[:, :, None] == np.arange(m))
        edge_open = is_connector | (u < t_open)
        child_conn = is_connector | (~edge_open & (u >= t_closed_disc))
        first = level_offset(k, d + 1) - 1
        out[:, first: first + width * m] = edge_open.reshape(n, width * m)
        conn = child_conn.reshape(n, width * m)
    return out


def dp_exact_sample(ball: WiredBall, beta, seed=None) -> EdgeConfig:
    """One exact sample from the arboreal gas on ``ball``."""
    return EdgeConfig(ball, dp_exact_sample_batch(ball, beta, 1, seed)[0])

