"""Estimators, reference laws and reports built on the engines and samplers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .exact import dp_partition, exact_cylinder_prob
from .limit import CylinderSpec, limit_cylinder_prob, restricted_finiteness_prob, theta
from .params import Params, Regime
from .sampler import ObservableBatch, explore_batch, limit_batch
from .tree import WiredBall

__all__ = [
    "Estimate",
    "ClusterStats",
    "ClusterLaw",
    "mc_estimate",
    "limit_sampler",
    "critical_cluster_law",
    "percolation_reach_prob",
    "survival_reference",
    "two_branch_reference",
    "finiteness_reference",
    "truncated_tv",
    "ConvergenceRow",
    "convergence_report",
    "rows_to_csv",
    "IndependenceReport",
    "independence_test",
]

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    seed: int | None = None

    @classmethod
    def from_counts(cls, hits: int, n: int, seed: int | None = None) -> "Estimate":
        if n < 1:
            raise ParameterError("need at least one sample")
        if not 0 <= hits <= n:
            raise ParameterError(f"hit count {hits} outside [0, {n}]")
        v = hits / n
        return cls(v, math.sqrt(v * (1.0 - v) / n), n, seed)

    @property
    def hits(self) -> int:
        return round(self.value * self.n)

    @property
    def ci95(self) -> tuple[float, float]:
        return self.value - Z95 * self.stderr, self.value + Z95 * self.stderr

    def zscore(self, target: float) -> float:
        diff = self.value - target
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two indicator estimates over disjoint sample ranges."""
        return Estimate.from_counts(self.hits + other.hits, self.n + other.n, self.seed)

    def as_dict(self) -> dict:
        lo, hi = self.ci95
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "seed": self.seed, "ci95": [lo, hi]}


@dataclass
class ClusterStats:
    """Root-cluster sizes of finite clusters plus the number reaching depth ``R``."""

    size_histogram: dict[int, int]
    survival_count: int
    n_samples: int

    def __post_init__(self):
        if sum(self.size_histogram.values()) + self.survival_count != self.n_samples:
            raise ParameterError("cluster counts do not sum to the sample count")

    @classmethod
    def from_sizes(cls, sizes: np.ndarray) -> "ClusterStats":
        """``sizes`` uses -1 for clusters reaching depth ``R``."""
        sizes = np.asarray(sizes)
        finite = sizes[sizes >= 0]
        vals, counts = np.unique(finite, return_counts=True)
        hist = {int(v): int(c) for v, c in zip(vals, counts)}
        return cls(hist, int((sizes < 0).sum()), int(sizes.size))

    @classmethod
    def from_batch(cls, batch: ObservableBatch) -> "ClusterStats":
        return cls.from_sizes(batch.cluster_size)

    def merge(self, other: "ClusterStats") -> "ClusterStats":
        hist = dict(self.size_histogram)
        for s, c in other.size_histogram.items():
            hist[s] = hist.get(s, 0) + c
        return ClusterStats(hist, self.survival_count + other.survival_count, self.n_samples + other.n_samples)

    @property
    def n_finite(self) -> int:
        return self.n_samples - self.survival_count

    def survival(self, seed: int | None = None) -> Estimate:
        return Estimate.from_counts(self.survival_count, self.n_samples, seed)

    def conditional_law(self, max_size: int) -> np.ndarray:
        """Frequencies of sizes ``1..max_size`` among finite clusters (index 0 is size 1)."""
        if self.n_finite == 0:
            return np.zeros(max_size)
        return np.array([self.size_histogram.get(m, 0) for m in range(1, max_size + 1)]) / self.n_finite


def mc_estimate(
    event: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[int, int, int], np.ndarray],
    n: int,
    seed: int,
    chunk: int = 1 << 15,
) -> Estimate:
    """Monte Carlo frequency of ``event``.

    ``sampler(m, seed, start)`` returns ``m`` samples (one per row) and
    ``event`` maps such a block to a boolean vector. Splitting into chunks
    does not change the result.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    hits = 0
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        hit = np.asarray(event(sampler(m, seed, start)), dtype=bool)
        if hit.shape != (m,):
            raise ParameterError(f"event returned shape {hit.shape}, expected ({m},)")
        hits += int(hit.sum())
    return Estimate.from_counts(hits, n, seed)


def limit_sampler(params: Params, R: int) -> Callable[[int, int, int], np.ndarray]:
    return lambda m, seed, start: limit_batch(params, R, m, seed, start)


class ClusterLaw(dict):
    """``size -> probability`` for sizes ``1..max_size``; ``tail`` is the remaining mass."""

    tail: float

    def as_array(self) -> np.ndarray:
        return np.array([self[m] for m in sorted(self)])


def critical_cluster_law(k: int, max_size: int, root_degree: int | None = None) -> ClusterLaw:
    """Law of the root cluster size under critical percolation on the ``k``-regular tree.

    The cluster hanging below an edge has size generating function
    ``H(s) = s * (1 - p + p H(s))**(k - 1)``; the root cluster is
    ``s * (1 - p + p H(s))**root_degree`` with ``root_degree`` defaulting to
    ``k``. Coefficients are obtained by fixed-point iteration on truncated
    power series, which is exact after ``max_size`` rounds.
    """
    if k < 3:
        raise ParameterError(f"k must be at least 3, got {k}")
    if max_size < 1:
        raise ParameterError(f"max_size must be at least 1, got {max_size}")
    deg = k if root_degree is None else root_degree
    if deg < 0:
        raise ParameterError("root_degree must be non-negative")
    p = 1.0 / (k - 1)
    n = max_size + 1  # coefficients of s^0 .. s^max_size

    def mul(a, b):
        return np.convolve(a, b)[:n]

    def power(a, e):
        out = np.zeros(n)
        out[0] = 1.0
        base = a
        while e:
            if e & 1:
                out = mul(out, base)
            base = mul(base, base)
            e >>= 1
        return out

    def branch(h):
        b = p * h
        b[0] += 1.0 - p
        return b

    def shift(a):
        return np.concatenate(([0.0], a[:-1]))

    h = np.zeros(n)
    for _ in range(max_size):
        h = shift(power(branch(h), k - 1))
    root = shift(power(branch(h), deg))
    law = ClusterLaw({m: float(root[m]) for m in range(1, n)})
    law.tail = max(0.0, 1.0 - math.fsum(law.values()))
    return law


def percolation_reach_prob(k: int, p: float, depth: int) -> float:
    """Probability that a vertex with ``k - 1`` children reaches ``depth`` more levels by open edges."""
    h = 1.0
    for _ in range(depth):
        h = 1.0 - (1.0 - p * h) ** (k - 1)
    return h


def _branch_reach(params: Params, R: int) -> tuple[float, float]:
    """(root-activity probability, probability one root branch reaches depth ``R`` by percolation)."""
    if params.is_percolation:
        return 0.0, params.p_beta * percolation_reach_prob(params.k, params.p_beta, R - 1)
    return theta(params), params.p_c * percolation_reach_prob(params.k, params.p_c, R - 1)


def survival_reference(params: Params, R: int) -> float:
    """Exact probability that the truncated sampler connects the root to depth ``R``.

    The infinite-volume value is ``theta``; the difference is the truncation bracket.
    """
    t, g = _branch_reach(params, R)
    k = params.k
    return t + (1.0 - t) * (1.0 - (1.0 - g) ** k)


def two_branch_reference(params: Params, R: int) -> float:
    """Exact probability that two root branches reach depth ``R`` in the truncated sampler."""
    t, g = _branch_reach(params, R)
    k = params.k
    none_or_one = (1.0 - g) ** k + k * g * (1.0 - g) ** (k - 1)
    return (1.0 - t) * (1.0 - none_or_one) + t * (1.0 - (1.0 - g) ** (k - 1))


def finiteness_reference(params: Params, R: int, size_e2: int) -> float:
    """Exact probability that no branch in a set of ``size_e2`` root branches reaches depth ``R``.

    Tends to ``restricted_finiteness_prob`` as ``R`` grows.
    """
    t, g = _branch_reach(params, R)
    return (1.0 - t * size_e2 / params.k) * (1.0 - g) ** size_e2


def truncated_tv(p: Sequence[float], q: Sequence[float]) -> float:
    """Total variation between ``p`` and ``q`` after renormalizing both to their common support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ParameterError("distributions must have the same support")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ParameterError("a distribution has no mass on the support")
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass(frozen=True)
class ConvergenceRow:
    R: int
    exact: float
    limit: float

    @property
    def gap(self) -> float:
        return abs(self.exact - self.limit)

    def as_dict(self) -> dict:
        return {"R": self.R, "exact": self.exact, "limit": self.limit, "gap": self.gap}


def convergence_report(k: int, beta: float, spec: CylinderSpec, Rs: Iterable[int]) -> list[ConvergenceRow]:
    """Exact wired-ball probabilities of a cylinder next to its limit, one row per radius."""
    params = Params(k, beta)
    if params.regime is Regime.WUSF:
        raise ParameterError("the exact engine needs a finite beta")
    limit = limit_cylinder_prob(params, spec)
    rows = []
    for R in Rs:
        if R <= spec.max_depth:
            raise ParameterError(f"R = {R} does not contain the cylinder (needs R > {spec.max_depth})")
        rows.append(ConvergenceRow(int(R), exact_cylinder_prob(WiredBall(k, R), beta, spec), limit))
    return rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    return buf.getvalue()


@dataclass
class IndependenceReport:
    """Outcome of the split-independence check.

    ``joint``, ``marg1`` and ``marg2`` are frequencies among samples whose
    root cluster does not reach depth ``R`` through ``E2``. The ``T1`` event
    is "the first ``E1`` edge is open"; the ``T2`` event is "every ``E2`` edge
    is closed".
    """

    params: Params
    E1: tuple[int, ...]
    E2: tuple[int, ...]
    R: int
    n: int
    seed: int
    conditioning: Estimate
    conditioning_target: float
    conditioning_truncated: float
    joint: float
    marg1: float
    marg2: float
    discrepancy_stderr: float
    t2_law: np.ndarray
    t2_reference: np.ndarray
    t2_tv: float
    extra: dict = field(default_factory=dict)

    @property
    def discrepancy(self) -> float:
        return self.joint - self.marg1 * self.marg2

    @property
    def discrepancy_z(self) -> float:
        if self.discrepancy_stderr == 0.0:
            return 0.0 if self.discrepancy == 0.0 else math.inf
        return self.discrepancy / self.discrepancy_stderr

    def as_dict(self) -> dict:
        return {
            "k": self.params.k,
            "beta": self.params.beta,
            "E1": list(self.E1),
            "E2": list(self.E2),
            "R": self.R,
            "n": self.n,
            "seed": self.seed,
            "conditioning": self.conditioning.as_dict(),
            "conditioning_target": self.conditioning_target,
            "conditioning_truncated": self.conditioning_truncated,
            "joint": self.joint,
            "marg1": self.marg1,
            "marg2": self.marg2,
            "discrepancy": self.discrepancy,
            "discrepancy_stderr": self.discrepancy_stderr,
            "t2_law": self.t2_law.tolist(),
            "t2_reference": self.t2_reference.tolist(),
            "t2_tv": self.t2_tv,
        }


def independence_test(
    k: int,
    beta: float,
    E2: Sequence[int],
    R: int,
    n: int,
    seed: int,
    max_size: int = 10,
    threads: int = 1,
    backend: str | None = None,
) -> IndependenceReport:
    """Check that the ``T1`` side and the ``T2`` cluster decouple given ``T2`` finiteness.

    Root edges are numbered ``0..k-1``; ``E2`` lists those of ``T2`` and the
    rest form ``E1``.
    """
    params = Params(k, beta)
    if params.regime is Regime.SUBCRITICAL:
        raise ParameterError("the independence test needs beta >= beta_c")
    E2 = tuple(sorted(set(int(i) for i in E2)))
    if not E2:
        raise ParameterError("E2 must be nonempty")
    if any(not 0 <= i < k for i in E2):
        raise ParameterError(f"E2 entries must lie in 0..{k - 1}")
    E1 = tuple(i for i in range(k) if i not in E2)
    batch = explore_batch(params, R, n, seed, threads=threads, backend=backend)

    reach_bits = (batch.reach[:, None] >> np.arange(k, dtype=np.uint64)) & np.uint64(1)
    star_bits = ((batch.star[:, None] >> np.arange(k, dtype=np.uint64)) & np.uint64(1)).astype(bool)
    finite2 = ~reach_bits[:, list(E2)].astype(bool).any(axis=1)
    m = int(finite2.sum())
    cond = Estimate.from_counts(m, n, seed)
    target = restricted_finiteness_prob(params, len(E1), len(E2))

    a = star_bits[finite2, E1[0]] if E1 else np.ones(m, dtype=bool)
    b = ~star_bits[finite2][:, list(E2)].any(axis=1)
    if m:
        fa, fb = a.astype(float), b.astype(float)
        ma, mb = fa.mean(), fb.mean()
        joint = float((fa * fb).mean())
        infl = (fa - ma) * (fb - mb)
        se = float(infl.std(ddof=1) / math.sqrt(m)) if m > 1 else math.inf
        sizes2 = 1 + batch.sizes[finite2][:, list(E2)].sum(axis=1)
        counts = np.bincount(np.minimum(sizes2, max_size + 1), minlength=max_size + 2)
        law = counts[1: max_size + 1] / m
    else:
        ma = mb = joint = 0.0
        se = math.inf
        law = np.zeros(max_size)
    ref = critical_cluster_law(k, max_size, root_degree=len(E2)).as_array()
    tv = truncated_tv(law, ref) if law.sum() > 0 else 1.0
    return IndependenceReport(
        params,
        E1,
        E2,
        int(R),
        n,
        batch.seed,
        cond,
        target,
        finiteness_reference(params, R, len(E2)),
        joint, float(ma), float(mb), se, law, ref, tv
    )


def dp_root_edge_q(k: int, beta: float, R: int) -> float:
    """Root-edge disconnection probability from the wired-ball DP."""
    return dp_partition(WiredBall(k, R), beta).root_edge_q()
