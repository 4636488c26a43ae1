"""Rooted k-regular tree: addresses, edges, balls, wired balls and configurations.

Vertices are addressed by the child indices taken on the way down from the
root ``o``. The root has ``k`` children (indices ``0..k-1``) and every other
vertex has ``k-1`` children (indices ``0..k-2``). Each tree edge is named by
its upper endpoint, so edge and vertex numberings share one breadth-first
order: vertex ``i > 0`` is the upper endpoint of edge ``i - 1``.

A wired ball of radius ``R`` keeps every edge with ``d(o, e+) <= R + 1`` and
merges all depth ``R + 1`` endpoints into the single boundary vertex. Its
edge numbering is therefore the breadth-first numbering of the radius ``R + 1``
tree ball, which puts the boundary edges last, ordered by parent address and
then by parallel index.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ParameterError

__all__ = [
    "TreeAddress",
    "ROOT",
    "Edge",
    "TreeBall",
    "WiredBall",
    "Graph",
    "EdgeConfig",
    "UnionFind",
    "build_wired_ball",
    "is_forest",
    "boundary_edge_sets",
    "edges_at",
    "level_size",
    "level_offset",
]


def _check_k(k: int) -> None:
    if isinstance(k, bool) or int(k) != k or k < 3:
        raise ParameterError(f"k must be an integer >= 3, got {k!r}")


def level_size(k: int, depth: int) -> int:
    """Number of vertices at distance ``depth`` from the root."""
    if depth == 0:
        return 1
    return k * (k - 1) ** (depth - 1)


def level_offset(k: int, depth: int) -> int:
    """Breadth-first index of the first vertex at ``depth``."""
    if depth == 0:
        return 0
    return 1 + k * ((k - 1) ** (depth - 1) - 1) // (k - 2)


@dataclass(frozen=True, order=True)
class TreeAddress:
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))
        if any(i < 0 for i in self.path):
            raise ParameterError(f"negative child index in {self.path}")

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def is_root(self) -> bool:
        return not self.path

    def parent(self) -> "TreeAddress":
        if not self.path:
            raise ParameterError("the root has no parent")
        return TreeAddress(self.path[:-1])

    def child(self, i: int) -> "TreeAddress":
        return TreeAddress(self.path + (int(i),))

    def n_children(self, k: int) -> int:
        return k if not self.path else k - 1

    def children(self, k: int) -> list["TreeAddress"]:
        return [self.child(i) for i in range(self.n_children(k))]

    def validate(self, k: int) -> "TreeAddress":
        _check_k(k)
        for step, i in enumerate(self.path):
            bound = k if step == 0 else k - 1
            if not 0 <= i < bound:
                raise ParameterError(f"address {self} is not a vertex of the {k}-regular tree")
        return self

    def is_descendant_of(self, other: "TreeAddress") -> bool:
        """True iff the geodesic from the root to ``self`` passes ``other``."""
        return self.path[: other.depth] == other.path

    def distance(self, other: "TreeAddress") -> int:
        common = 0
        for a, b in zip(self.path, other.path):
            if a != b:
                break
            common += 1
        return self.depth + other.depth - 2 * common

    def index(self, k: int) -> int:
        """Breadth-first index (root is 0)."""
        self.validate(k)
        if not self.path:
            return 0
        rank = self.path[0]
        for i in self.path[1:]:
            rank = rank * (k - 1) + i
        return level_offset(k, self.depth) + rank

    @classmethod
    def from_index(cls, k: int, index: int) -> "TreeAddress":
        _check_k(k)
        if index < 0:
            raise ParameterError(f"negative vertex index {index}")
        depth = 0
        while level_offset(k, depth + 1) <= index:
            depth += 1
        if depth == 0:
            return ROOT
        rank = index - level_offset(k, depth)
        digits = []
        for _ in range(depth - 1):
            rank, digit = divmod(rank, k - 1)
            digits.append(digit)
        digits.append(rank)
        return cls(tuple(reversed(digits)))

    @classmethod
    def parse(cls, text: str) -> "TreeAddress":
        """Parse ``o`` or ``o:i/j/...``."""
        text = text.strip()
        if text == "o":
            return ROOT
        m = re.fullmatch(r"o:(\d+(?:/\d+)*)", text)
        if not m:
            raise ParameterError(f"cannot parse tree address {text!r}; expected o:i/j/...")
        return cls(tuple(int(t) for t in m.group(1).split("/")))

    def __str__(self) -> str:
        if not self.path:
            return "o"
        return "o:" + "/".join(str(i) for i in self.path)


ROOT = TreeAddress(())


@dataclass(frozen=True, order=True)
class Edge:
    """Tree edge from ``lower`` (closer to the root) to its child ``child_index``."""

    lower: TreeAddress
    child_index: int

    @property
    def upper(self) -> TreeAddress:
        return self.lower.child(self.child_index)

    @property
    def depth(self) -> int:
        """Distance from the root to the upper endpoint."""
        return self.lower.depth + 1

    def validate(self, k: int) -> "Edge":
        self.upper.validate(k)
        return self

    def index(self, k: int) -> int:
        return self.upper.index(k) - 1

    def endpoints(self) -> tuple[TreeAddress, TreeAddress]:
        return self.lower, self.upper

    @classmethod
    def from_upper(cls, upper: TreeAddress) -> "Edge":
        if upper.is_root:
            raise ParameterError("the root is not the upper endpoint of any edge")
        return cls(upper.parent(), upper.path[-1])

    @classmethod
    def parse(cls, text: str) -> "Edge":
        """Parse edge-path notation ``o:i/j/k`` naming the upper endpoint."""
        return cls.from_upper(TreeAddress.parse(text))

    def __str__(self) -> str:
        return str(self.upper)


def edges_at(k: int, v: TreeAddress) -> list[Edge]:
    """All tree edges incident to ``v``."""
    out = [] if v.is_root else [Edge.from_upper(v)]
    out.extend(Edge(v, i) for i in range(v.n_children(k)))
    return out


@dataclass(frozen=True)
class Graph:
    """Finite multigraph given by a vertex count and an edge list."""

    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        for u, v in self.edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ParameterError(f"edge ({u}, {v}) outside vertex range")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def triangle(cls) -> "Graph":
        return cls(3, ((0, 1), (1, 2), (0, 2)))

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    def graph(self) -> "Graph":
        return self


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        """Merge the sets of ``a`` and ``b``; False if they were already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


class TreeBall:
    """Edges of the tree with ``d(o, e+) <= radius`` (free boundary, no wiring)."""

    def __init__(self, k: int, radius: int):
        _check_k(k)
        if isinstance(radius, bool) or int(radius) != radius or radius < 0:
            raise ParameterError(f"radius must be a non-negative integer, got {radius!r}")
        self.k = int(k)
        self.radius = int(radius)
        self.n_vertices = level_offset(self.k, self.radius + 1)
        self.n_edges = self.n_vertices - 1

    def __eq__(self, other):
        return type(other) is TreeBall and (self.k, self.radius) == (other.k, other.radius)

    def __hash__(self):
        return hash(("TreeBall", self.k, self.radius))

    def __repr__(self):
        return f"TreeBall(k={self.k}, radius={self.radius})"

    def edge(self, i: int) -> Edge:
        if not 0 <= i < self.n_edges:
            raise IndexError(i)
        return Edge.from_upper(TreeAddress.from_index(self.k, i + 1))

    def edge_index(self, e: Edge) -> int:
        e.validate(self.k)
        if e.depth > self.radius:
            raise ParameterError(f"edge {e} lies outside {self!r}")
        return e.index(self.k)

    def edges(self) -> Iterator[Edge]:
        for i in range(self.n_edges):
            yield self.edge(i)

    def n_edges_within(self, radius: int) -> int:
        """Edges with ``d(o, e+) <= radius``; they form a prefix of the numbering."""
        return level_offset(self.k, min(radius, self.radius) + 1) - 1

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=np.int64)
        for r in range(1, self.radius + 1):
            d[level_offset(self.k, r): level_offset(self.k, r + 1)] = r
        d.flags.writeable = False
        return d

    @cached_property
    def parent(self) -> np.ndarray:
        """Parent vertex index per vertex (-1 for the root)."""
        k = self.k
        par = np.full(self.n_vertices, -1, dtype=np.int64)
        for r in range(1, self.radius + 1):
            lo, hi = level_offset(k, r), level_offset(k, r + 1)
            rank = np.arange(hi - lo)
            par[lo:hi] = 0 if r == 1 else level_offset(k, r - 1) + rank // (k - 1)
        par.flags.writeable = False
        return par

    @cached_property
    def child_slot(self) -> np.ndarray:
        """Child index of each vertex below its parent (-1 for the root)."""
        k = self.k
        slot = np.full(self.n_vertices, -1, dtype=np.int64)
        for r in range(1, self.radius + 1):
            lo, hi = level_offset(k, r), level_offset(k, r + 1)
            rank = np.arange(hi - lo)
            slot[lo:hi] = rank if r == 1 else rank % (k - 1)
        slot.flags.writeable = False
        return slot

    @cached_property
    def endpoints(self) -> np.ndarray:
        """``(n_edges, 2)`` array of (lower, upper) vertex indices."""
        up = np.arange(1, self.n_vertices, dtype=np.int64)
        out = np.stack([self.parent[1:], up], axis=1)
        out.flags.writeable = False
        return out

    def graph(self) -> Graph:
        return Graph(self.n_vertices, tuple(map(tuple, self.endpoints.tolist())))


class WiredBall:
    """Ball of radius ``R`` with all exterior neighbours merged into one vertex.

    Vertex indices ``0..n_vertices-1`` are tree vertices in breadth-first order
    and ``boundary_vertex == n_vertices`` is the merged vertex. Edges
    ``0..n_internal-1`` are tree edges inside the ball; the remaining
    ``n_boundary`` edges join each depth ``R`` vertex to the boundary vertex
    ``k - 1`` times.
    """

    def __init__(self, k: int, radius: int):
        _check_k(k)
        if isinstance(radius, bool) or int(radius) != radius or radius < 1:
            raise ParameterError(f"radius must be an integer >= 1, got {radius!r}")
        self.k = int(k)
        self.radius = int(radius)
        self.tree = TreeBall(self.k, self.radius)
        self.n_vertices = self.tree.n_vertices
        self.boundary_vertex = self.n_vertices
        self.n_internal = self.tree.n_edges
        self.n_boundary = self.k * (self.k - 1) ** self.radius
        self.n_edges = self.n_internal + self.n_boundary

    def __eq__(self, other):
        return type(other) is WiredBall and (self.k, self.radius) == (other.k, other.radius)

    def __hash__(self):
        return hash(("WiredBall", self.k, self.radius))

    def __repr__(self):
        return f"WiredBall(k={self.k}, radius={self.radius})"

    def edge(self, i: int) -> Edge:
        """Tree edge for index ``i``; boundary edges have their upper end at depth R + 1."""
        if not 0 <= i < self.n_edges:
            raise IndexError(i)
        return Edge.from_upper(TreeAddress.from_index(self.k, i + 1))

    def edge_index(self, e: Edge) -> int:
        e.validate(self.k)
        if e.depth > self.radius + 1:
            raise ParameterError(f"edge {e} lies outside {self!r}")
        return e.index(self.k)

    def is_boundary_edge(self, i: int) -> bool:
        return i >= self.n_internal

    def edges(self) -> Iterator[Edge]:
        for i in range(self.n_edges):
            yield self.edge(i)

    @cached_property
    def endpoints(self) -> np.ndarray:
        """``(n_edges, 2)`` array of vertex indices; boundary edges end at ``boundary_vertex``."""
        k, R = self.k, self.radius
        inner = self.tree.endpoints
        lo = level_offset(k, R)
        rim = np.repeat(np.arange(lo, self.n_vertices, dtype=np.int64), k - 1)
        outer = np.stack([rim, np.full_like(rim, self.boundary_vertex)], axis=1)
        out = np.concatenate([inner, outer], axis=0)
        out.flags.writeable = False
        return out

    def degree(self) -> np.ndarray:
        """Multigraph degree of every vertex, the boundary vertex last."""
        return np.bincount(self.endpoints.ravel(), minlength=self.n_vertices + 1)

    def graph(self) -> Graph:
        return Graph(self.n_vertices + 1, tuple(map(tuple, self.endpoints.tolist())))


def build_wired_ball(k: int, R: int) -> WiredBall:
    return WiredBall(k, R)


class EdgeConfig:
    """A set of open edges over a fixed edge universe.

    The universe is a :class:`WiredBall`, :class:`TreeBall` or :class:`Graph`.
    Configurations over different universes refuse to be compared.

    Serialization: a lowercase hex string of the bit set in the universe's
    edge order, bit ``i`` of byte ``j`` holding edge ``8*j + i``.
    """

    __slots__ = ("universe", "bits")

    def __init__(self, universe, bits):
        arr = np.asarray(bits, dtype=bool)
        if arr.shape != (universe.n_edges,):
            raise ParameterError(
                f"configuration has {arr.shape} bits but the universe has {universe.n_edges} edges"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        self.universe = universe
        self.bits = arr

    @classmethod
    def empty(cls, universe) -> "EdgeConfig":
        return cls(universe, np.zeros(universe.n_edges, dtype=bool))

    @classmethod
    def full(cls, universe) -> "EdgeConfig":
        return cls(universe, np.ones(universe.n_edges, dtype=bool))

    @classmethod
    def from_edges(cls, universe, edges: Iterable) -> "EdgeConfig":
        bits = np.zeros(universe.n_edges, dtype=bool)
        for e in edges:
            bits[e if isinstance(e, (int, np.integer)) else universe.edge_index(e)] = True
        return cls(universe, bits)

    def _same_universe(self, other: "EdgeConfig") -> None:
        if not isinstance(other, EdgeConfig) or other.universe != self.universe:
            raise ParameterError("edge configurations over different universes are not comparable")

    def __contains__(self, e) -> bool:
        i = e if isinstance(e, (int, np.integer)) else self.universe.edge_index(e)
        return bool(self.bits[i])

    def __len__(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeConfig):
            return NotImplemented
        self._same_universe(other)
        return bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.universe, self.to_hex()))

    def __repr__(self):
        return f"EdgeConfig({self.universe!r}, open={len(self)})"

    def issubset(self, other: "EdgeConfig") -> bool:
        self._same_universe(other)
        return bool(np.all(~self.bits | other.bits))

    def open_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def open_edges(self) -> list[Edge]:
        return [self.universe.edge(int(i)) for i in self.open_indices()]

    def restrict(self, radius: int) -> "EdgeConfig":
        """Restriction of a tree-ball configuration to a smaller ball (a prefix)."""
        if not isinstance(self.universe, TreeBall):
            raise ParameterError("restriction is defined for tree-ball configurations")
        if radius > self.universe.radius:
            raise ParameterError("cannot restrict to a larger ball")
        sub = TreeBall(self.universe.k, radius)
        return EdgeConfig(sub, self.bits[: sub.n_edges])

    def to_hex(self) -> str:
        return np.packbits(self.bits, bitorder="little").tobytes().hex()

    @classmethod
    def from_hex(cls, universe, text: str) -> "EdgeConfig":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")
        n = universe.n_edges
        if bits.size < n or bits[n:].any() or raw.size != (n + 7) // 8:
            raise ParameterError("hex string does not match the universe size")
        return cls(universe, bits[:n].astype(bool))


def is_forest(ball, config: EdgeConfig) -> bool:
    """True iff the open edges of ``config`` contain no cycle (2-cycles included)."""
    if config.universe != ball:
        raise ParameterError("configuration is not over this ball")
    g = ball.graph() if not isinstance(ball, Graph) else ball
    uf = UnionFind(g.n_vertices)
    for i in np.flatnonzero(config.bits):
        u, v = g.edges[i]
        if not uf.union(u, v):
            return False
    return True


def boundary_edge_sets(k: int, B: Iterable[Edge]) -> tuple[frozenset, frozenset]:
    """Return ``(dB, d2B)``: edges adjacent to ``B`` outside it, and ``d(B | dB)``."""

    def boundary(edges: frozenset) -> frozenset:
        out = set()
        for e in edges:
            for v in e.endpoints():
                out.update(edges_at(k, v))
        return frozenset(out - edges)

    B = frozenset(e.validate(k) for e in B)
    dB = boundary(B)
    return dB, boundary(B | dB)


def edge_set_connected(edges: Sequence[Edge] | frozenset) -> bool:
    """True iff the edges form a connected subgraph (vacuously for one edge)."""
    edges = list(edges)
    if not edges:
        return True
    verts = {}
    for e in edges:
        for v in e.endpoints():
            verts.setdefault(v, len(verts))
    uf = UnionFind(len(verts))
    for e in edges:
        uf.union(verts[e.lower], verts[e.upper])
    return len({uf.find(i) for i in range(len(verts))}) == 1
