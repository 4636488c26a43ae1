"""Samplers for the infinite-volume wired measure, restricted to finite balls.

The supercritical construction superposes critical percolation and outward
paths started from a random vertex set. All randomness comes from
:mod:`arboreal.rng`, one stream per layer (percolation, vertex layer,
successors, conditionals), keyed by vertex. Consequences:

* Restriction is exact: a path only moves away from the root, so the state of
  an edge depends only on uniforms at or above its upper endpoint. Sampling
  with truncation radius ``R`` and looking at depth ``r <= R`` gives the law of
  the infinite-volume measure on that ball for every ``R``.
* Samplers at different parameters called with the same seed share their
  uniforms, which is the monotone coupling in ``beta``.
* Sample ``j`` of a batch depends only on ``(seed, j)``, so batches may be split
  across calls or threads freely.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import rng
from .errors import ParameterError
from .kernels import get_explore
from .limit import CylinderSpec, eta_probabilities, limit_cylinder_prob
from .params import Params, Regime, parse_beta
from .tree import ROOT, Edge, EdgeConfig, TreeBall, level_offset

__all__ = [
    "LimitSampleParts",
    "ObservableBatch",
    "sample_percolation",
    "percolation_batch",
    "sample_wired_limit",
    "limit_batch",
    "sample_coupled_betas",
    "coupled_batch",
    "conditional_source_probs",
    "sample_conditional_edge",
    "conditional_batch",
    "explore_batch",
]

MAX_MATERIALIZED_EDGES = 1 << 22
BATCH_CHUNK = 1 << 15


def _check_radius(k: int, radius: int) -> TreeBall:
    if isinstance(radius, bool) or int(radius) != radius or radius < 1:
        raise ParameterError(f"R must be an integer >= 1, got {radius!r}")
    ball = TreeBall(k, radius)
    if ball.n_edges > MAX_MATERIALIZED_EDGES:
        raise ParameterError(
            f"a ball of radius {radius} has {ball.n_edges} edges; materialize a smaller ball "
            "or use explore_batch for root-cluster statistics"
        )
    return ball


@lru_cache(maxsize=32)
def _ball_arrays(k: int, radius: int):
    ball = TreeBall(k, radius)
    keys = rng.tree_vertex_keys(k, radius)
    n_children = np.where(ball.depth == 0, k, k - 1)
    return ball, keys, n_children


def _layer_params(params: Params) -> tuple[float, float, float]:
    """(percolation threshold, root vertex-layer probability, other vertex-layer probability)."""
    if params.is_percolation:
        return params.p_beta, 0.0, 0.0
    eta_root, eta_other = eta_probabilities(params)
    return params.p_c, eta_root, eta_other


def _streams(seed: int, start: int, n: int) -> dict[int, np.ndarray]:
    skeys = rng.sample_keys_np(seed, start, n)
    return {s: rng.stream_keys_np(skeys, s) for s in (rng.PERC, rng.ETA, rng.SUCC, rng.COND)}


def _successors(streams, keys, n_children) -> np.ndarray:
    u = rng.uniforms_np(streams[rng.SUCC][:, None], keys[None, :])
    return np.minimum((u * n_children).astype(np.int64), n_children - 1)


def _propagate(ball: TreeBall, open0, starts, succ):
    """Active flags and final configuration, level by level.

    ``starts[:, v]``: ``v`` begins a path. Edge ``v -> c`` is open iff it is open
    in ``open0`` or ``v`` is active and ``succ[:, v]`` names ``c``.
    """
    k = ball.k
    n = open0.shape[0]
    active = starts.copy()
    omega = open0.copy()
    for d in range(1, ball.radius + 1):
        lo, hi = level_offset(k, d), level_offset(k, d + 1)
        par = ball.parent[lo:hi]
        slot = ball.child_slot[lo:hi]
        via_path = active[:, par] & (succ[:, par] == slot[None, :])
        active[:, lo:hi] |= via_path
        omega[:, lo - 1: hi - 1] |= via_path
    assert omega.shape == (n, ball.n_edges)
    return active, omega


def _limit_chunk(params: Params, radius: int, seed: int, start: int, n: int, with_parts: bool):
    ball, keys, n_children = _ball_arrays(params.k, radius)
    p_open, eta_root, eta_other = _layer_params(params)
    st = _streams(seed, start, n)
    open0 = rng.uniforms_np(st[rng.PERC][:, None], keys[None, 1:]) < p_open
    if eta_root == 0.0 and eta_other == 0.0:
        if not with_parts:
            return open0
        empty = np.zeros((n, ball.n_vertices), dtype=bool)
        return open0, empty, empty, empty, np.zeros((n, ball.n_vertices), dtype=np.int64), open0
    thresholds = np.full(ball.n_vertices, eta_other)
    thresholds[0] = eta_root
    eta = rng.uniforms_np(st[rng.ETA][:, None], keys[None, :]) < thresholds[None, :]
    parent_closed = np.ones((n, ball.n_vertices), dtype=bool)
    parent_closed[:, 1:] = ~open0
    starts = eta & parent_closed
    succ = _successors(st, keys, n_children)
    active, omega = _propagate(ball, open0, starts, succ)
    if not with_parts:
        return omega
    return open0, eta, starts, active, succ, omega


def _chunked(fn, n: int, start: int, threads: int = 1):
    spans = [(start + lo, min(BATCH_CHUNK, n - lo)) for lo in range(0, n, BATCH_CHUNK)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: fn(*s), spans))
    else:
        parts = [fn(*s) for s in spans]
    return parts


def limit_batch(
    params: Params,
    radius: int,
    n: int,
    seed: int,
    start: int = 0,
    threads: int = 1,
    window: int | None = None,
) -> np.ndarray:
    """``(n, E)`` boolean array of samples ``start .. start + n - 1`` on the radius ``radius`` ball.

    With ``window`` set, only the edges of the radius ``window`` ball are
    returned, and only they are generated: paths move away from the root, so
    nothing outside that ball affects them. This is how large truncation radii
    are sampled.
    """
    if isinstance(radius, bool) or int(radius) != radius or radius < 1:
        raise ParameterError(f"R must be an integer >= 1, got {radius!r}")
    if window is None:
        window = radius
    elif not 1 <= window <= radius:
        raise ParameterError(f"window must lie in [1, R], got {window}")
    _check_radius(params.k, window)
    seed = rng.check_seed(seed)
    if n == 0:
        return np.zeros((0, TreeBall(params.k, window).n_edges), dtype=bool)
    parts = _chunked(lambda s, m: _limit_chunk(params, window, seed, s, m, False), n, start, threads)
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class LimitSampleParts:
    """One sample of the construction on the ball of radius ``R``.

    ``eta``, ``U`` and ``active`` are boolean arrays over breadth-first vertex
    indices; ``succ`` maps every vertex lying on a path to its chosen child
    index (vertices off the paths never have their successor materialized).
    In the percolation regimes the vertex layers are empty and
    ``omega0 == omega``.
    """

    params: Params
    R: int
    seed: int
    omega0: EdgeConfig
    eta: np.ndarray
    U: np.ndarray
    active: np.ndarray
    succ: dict
    omega: EdgeConfig

    def path_edges(self) -> EdgeConfig:
        """Edges contributed by the paths (``omega`` minus ``omega0``)."""
        return EdgeConfig(self.omega.universe, self.omega.bits & ~self.omega0.bits)


def sample_wired_limit(params: Params, R: int, seed: int) -> LimitSampleParts:
    """Sample the wired measure on the ball of radius ``R`` (sample index 0 of ``seed``)."""
    ball = _check_radius(params.k, R)
    seed = rng.check_seed(seed)
    open0, eta, starts, active, succ, omega = _limit_chunk(params, R, seed, 0, 1, True)
    succ_map = {int(v): int(succ[0, v]) for v in np.flatnonzero(active[0])}
    return LimitSampleParts(
        params=params,
        R=R,
        seed=seed,
        omega0=EdgeConfig(ball, open0[0]),
        eta=eta[0],
        U=starts[0],
        active=active[0],
        succ=succ_map,
        omega=EdgeConfig(ball, omega[0]),
    )


def percolation_batch(k: int, R: int, p: float, n: int, seed: int, start: int = 0) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    ball, keys, _ = _ball_arrays(k, _check_radius(k, R).radius)
    seed = rng.check_seed(seed)

    def chunk(s, m):
        st = rng.stream_keys_np(rng.sample_keys_np(seed, s, m), rng.PERC)
        return rng.uniforms_np(st[:, None], keys[None, 1:]) < p

    if n == 0:
        return np.zeros((0, ball.n_edges), dtype=bool)
    return np.concatenate(_chunked(chunk, n, start), axis=0)


def sample_percolation(k: int, R: int, p: float, seed: int) -> EdgeConfig:
    """Independent Bernoulli(``p``) edges on the radius ``R`` ball.

    Uses the percolation stream, so it coincides with the percolation layer of
    :func:`sample_wired_limit` for the same seed when ``p`` matches.
    """
    return EdgeConfig(TreeBall(k, R), percolation_batch(k, R, p, 1, seed)[0])


def _check_betas(betas: Sequence) -> list[float]:
    vals = [parse_beta(b) for b in betas]
    if not vals:
        raise ParameterError("need at least one beta")
    if any(b > a for a, b in zip(vals[1:], vals[:-1])):
        raise ParameterError(f"betas must be ascending, got {betas}")
    return vals


def coupled_batch(k: int, betas: Sequence, R: int, n: int, seed: int, start: int = 0) -> np.ndarray:
    """``(len(betas), n, E)`` array of monotonically coupled samples.

    The layers share every uniform: percolation thresholds ``p_beta`` (below
    the critical point) and ``p_c`` (above it) are ordered, the vertex-layer
    thresholds increase in ``beta`` and the successors are common.
    """
    vals = _check_betas(betas)
    return np.stack([limit_batch(Params(k, b), R, n, seed, start) for b in vals], axis=0)


def sample_coupled_betas(k: int, betas: Sequence, R: int, seed: int) -> list[EdgeConfig]:
    ball = _check_radius(k, R)
    arr = coupled_batch(k, betas, R, 1, seed)
    return [EdgeConfig(ball, arr[i, 0]) for i in range(arr.shape[0])]


@lru_cache(maxsize=64)
def conditional_source_probs(params: Params) -> tuple[float, float]:
    """Probabilities ``(a_open, a_closed)`` that an endpoint of a root edge ``e``
    carries an infinite path avoiding ``e``, given ``e`` open or closed.

    With ``E1 = {e}`` and ``E2`` the other root edges, the finiteness identity
    ``W(eta1 on B1, K_o in T2 finite) = W(eta1 on B1, E2 closed) / (1 - p_c)**|E2|``
    turns both into ratios of cylinder probabilities of the root star.
    """
    if params.regime is Regime.SUBCRITICAL:
        raise ParameterError("the conditional coupling needs beta >= beta_c")
    if params.regime is Regime.CRITICAL:
        return 0.0, 0.0
    if params.regime is Regime.WUSF:
        return 0.5, 1.0
    k = params.k
    e = Edge(ROOT, 0)
    star = [Edge(ROOT, i) for i in range(k)]
    scale = (1.0 - params.p_c) ** (k - 1)
    out = []
    for is_open in (True, False):
        marginal = limit_cylinder_prob(params, CylinderSpec.single(k, e, is_open))
        states = {f: False for f in star}
        states[e] = is_open
        finite = limit_cylinder_prob(params, CylinderSpec.from_states(k, states)) / scale
        out.append(1.0 - finite / marginal)
    return out[0], out[1]


def _conditional_chunk(params: Params, radius: int, edge_slot: int, seed: int, start: int, n: int):
    ball, keys, n_children = _ball_arrays(params.k, radius)
    k = params.k
    a_open, a_closed = conditional_source_probs(params)
    _, eta_other = eta_probabilities(params)
    st = _streams(seed, start, n)
    u_vertex = 1 + edge_slot
    e_idx = edge_slot

    open0 = rng.uniforms_np(st[rng.PERC][:, None], keys[None, 1:]) < params.p_c
    open0[:, e_idx] = False
    eta = rng.uniforms_np(st[rng.ETA][:, None], keys[None, :]) < eta_other
    eta[:, 0] = False
    eta[:, u_vertex] = False
    parent_closed = np.zeros((n, ball.n_vertices), dtype=bool)
    parent_closed[:, 1:] = ~open0
    starts = eta & parent_closed

    succ = _successors(st, keys, n_children)
    # the root chooses among its k - 1 children other than u
    u_root = rng.uniforms_np(st[rng.SUCC], np.uint64(rng.ROOT_KEY))
    j = np.minimum((u_root * (k - 1)).astype(np.int64), k - 2)
    succ[:, 0] = np.where(j < edge_slot, j, j + 1)

    c_o = rng.uniforms_np(st[rng.COND], np.uint64(rng.ROOT_KEY))
    c_u = rng.uniforms_np(st[rng.COND], keys[u_vertex])
    t_u = min(a_open / (1.0 - a_open), a_closed)
    o_open = c_o < a_open
    u_open = ~o_open & (c_u < t_u)
    o_closed = c_o < a_closed
    u_closed = c_u < a_closed

    outs = []
    for o_src, u_src in ((o_open, u_open), (o_closed, u_closed)):
        s = starts.copy()
        s[:, 0] = o_src
        s[:, u_vertex] = u_src
        _, omega = _propagate(ball, open0, s, succ)
        # e is not part of T minus e, so u never inherits activity through it
        omega[:, e_idx] = False
        outs.append(omega)
    return outs[0], outs[1]


def conditional_batch(params: Params, R: int, edge: Edge, n: int, seed: int, start: int = 0):
    """Coupled samples of the measure conditioned on ``edge`` open and closed.

    Returns two ``(n, E)`` arrays over the radius ``R`` ball; the bit of
    ``edge`` itself is always cleared. The first array is contained in the
    second sample by sample.
    """
    if params.regime is Regime.SUBCRITICAL:
        raise ParameterError("the conditional coupling needs beta >= beta_c")
    edge = edge.validate(params.k)
    if edge.lower != ROOT:
        raise ParameterError(
            f"edge {edge} is not adjacent to the root; map it there by a tree automorphism first"
        )
    _check_radius(params.k, R)
    seed = rng.check_seed(seed)
    if n == 0:
        E = TreeBall(params.k, R).n_edges
        return np.zeros((0, E), dtype=bool), np.zeros((0, E), dtype=bool)
    parts = _chunked(lambda s, m: _conditional_chunk(params, R, edge.child_index, seed, s, m), n, start)
    return (np.concatenate([p[0] for p in parts], axis=0), np.concatenate([p[1] for p in parts], axis=0))


def sample_conditional_edge(params: Params, R: int, edge: Edge, seed: int) -> tuple[EdgeConfig, EdgeConfig]:
    ball = TreeBall(params.k, R)
    a, b = conditional_batch(params, R, edge, 1, seed)
    return EdgeConfig(ball, a[0]), EdgeConfig(ball, b[0])


@dataclass
class ObservableBatch:
    """Root-cluster statistics of a batch of samples; see :mod:`arboreal._explore_py`."""

    params: Params
    R: int
    seed: int
    start: int
    star: np.ndarray
    reach: np.ndarray
    sizes: np.ndarray

    @property
    def n(self) -> int:
        return int(self.star.size)

    def edge_open(self, i: int) -> np.ndarray:
        return ((self.star >> np.uint64(i)) & np.uint64(1)).astype(bool)

    def star_code(self) -> np.ndarray:
        return self.star.astype(np.int64)

    @property
    def survives(self) -> np.ndarray:
        """The root cluster reaches depth ``R``."""
        return self.reach != 0

    @property
    def n_reaching_branches(self) -> np.ndarray:
        bits = (self.reach[:, None] >> np.arange(self.params.k, dtype=np.uint64)) & np.uint64(1)
        return bits.sum(axis=1).astype(np.int64)

    @property
    def two_disjoint(self) -> np.ndarray:
        """Two edge-disjoint open paths from the root to depth ``R``."""
        return self.n_reaching_branches >= 2

    @property
    def cluster_size(self) -> np.ndarray:
        """Vertices in the root cluster, or -1 when it reaches depth ``R``."""
        size = 1 + self.sizes.sum(axis=1)
        return np.where(self.survives, -1, size)

    def concat(self, other: "ObservableBatch") -> "ObservableBatch":
        if (other.params, other.R, other.seed) != (self.params, self.R, self.seed):
            raise ParameterError("can only merge batches of the same run")
        if other.start != self.start + self.n:
            raise ParameterError("batches must be contiguous")
        return ObservableBatch(
            self.params,
            self.R,
            self.seed,
            self.start,
            np.concatenate([self.star, other.star]),
            np.concatenate([self.reach, other.reach]),
            np.concatenate([self.sizes, other.sizes]),
        )


def explore_batch(
    params: Params,
    R: int,
    n: int,
    seed: int,
    start: int = 0,
    threads: int = 1,
    backend: str | None = None,
) -> ObservableBatch:
    """Root-cluster statistics for ``n`` samples with paths truncated at depth ``R``.

    Cost is proportional to the explored part of the root cluster, not to the
    size of the ball, so ``R`` may be large.
    """
    if isinstance(R, bool) or int(R) != R or R < 1:
        raise ParameterError(f"R must be an integer >= 1, got {R!r}")
    if n < 0:
        raise ParameterError("n must be non-negative")
    seed = rng.check_seed(seed)
    explore = get_explore(backend)
    p_open, eta_root, eta_other = _layer_params(params)
    k = params.k
    step = max(1, math.ceil(n / max(threads, 1))) if threads > 1 else n
    spans = [(start + lo, min(step, n - lo)) for lo in range(0, n, step)] if n else []

    def run(span):
        s, m = span
        return explore(k, int(R), p_open, eta_root, eta_other, seed, s, m)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    if parts:
        star = np.concatenate([p[0] for p in parts])
        reach = np.concatenate([p[1] for p in parts])
        sizes = np.concatenate([p[2] for p in parts])
    else:
        star = np.zeros(0, dtype=np.uint64)
        reach = np.zeros(0, dtype=np.uint64)
        sizes = np.zeros((0, k), dtype=np.int64)
    return ObservableBatch(params, int(R), seed, start, star, reach, sizes)
