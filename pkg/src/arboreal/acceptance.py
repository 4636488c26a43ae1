"""Acceptance checks at desk scale.

Each ``criterion_N`` returns a :class:`CriterionResult`; :func:`run_all` runs
them in order. Thresholds are fixed here and are never relaxed by callers;
``scale`` only shrinks sample counts for quick smoke runs (results at
``scale < 1`` are not acceptance evidence).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import chi2_contingency

from .analysis import (
    ClusterStats,
    Estimate,
    critical_cluster_law,
    survival_reference,
    truncated_tv,
    two_branch_reference,
)
from .exact import dp_partition, enumerate_forests, exact_cylinder_prob
from .limit import CylinderSpec, limit_cylinder_prob, limit_marginal_prob, theta
from .params import INFINITY, Params
from .sampler import conditional_batch, coupled_batch, explore_batch, limit_batch
from .tree import ROOT, Edge, TreeAddress, TreeBall, WiredBall

__all__ = ["CriterionResult", "CRITERIA", "run_all", "format_table"]


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.title}: {self.summary} ({self.seconds:.1f} s)"


def _n(base: int, scale: float) -> int:
    return max(1000, int(base * scale))


def _timed(fn: Callable[..., CriterionResult]) -> Callable[..., CriterionResult]:
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def criterion_1(scale: float = 1.0) -> CriterionResult:
    """DP partition function against brute-force enumeration."""
    t0 = time.perf_counter()
    worst = 0.0
    rows = []
    for R in (1, 2):
        ball = WiredBall(3, R)
        en = enumerate_forests(ball, 1.0)
        for beta in (0.3, 1.0, 2.0, 5.0):
            z_enum = en.partition(beta)
            z_dp = dp_partition(ball, beta).z
            rel = abs(z_dp - z_enum) / z_enum
            worst = max(worst, rel)
            rows.append({"R": R, "beta": beta, "z_enum": z_enum, "z_dp": z_dp, "rel": rel})
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    return CriterionResult(
        1, "oracle equivalence", ok, f"max rel err {worst:.2e}, {elapsed:.2f} s", {"rows": rows, "elapsed": elapsed}
    )


@_timed
def criterion_2(scale: float = 1.0) -> CriterionResult:
    """Root-edge q on wired balls increases to lambda."""
    out = {}
    ok = True
    for beta, target in ((2.0, 2.0 / 3.0), (0.5, 1.0)):
        t0 = time.perf_counter()
        qs = [dp_partition(WiredBall(3, R), beta).root_edge_q() for R in range(1, 61)]
        elapsed = time.perf_counter() - t0
        increasing = all(b > a for a, b in zip(qs, qs[1:]))
        gap = abs(qs[-1] - target)
        good = increasing and gap <= 1e-9 and elapsed < 1.0
        ok &= good
        out[beta] = {"q60": qs[-1], "gap": gap, "increasing": increasing, "elapsed": elapsed}
    summary = ", ".join(f"beta={b}: gap@60 {d['gap']:.2e}" for b, d in out.items())
    return CriterionResult(2, "fixed-point convergence", ok, summary + " (bound 1e-9)", out)


@_timed
def criterion_3(scale: float = 1.0) -> CriterionResult:
    """Exact single-edge probabilities at R = 20 against the limit formula."""
    ball = WiredBall(3, 20)
    e = Edge(ROOT, 0)
    out = {}
    ok = True
    for beta in (0.5, 1.0, 2.0):
        params = Params(3, beta)
        gaps = []
        for is_open in (True, False):
            spec = CylinderSpec.single(3, e, is_open)
            gaps.append(abs(exact_cylinder_prob(ball, beta, spec) - limit_cylinder_prob(params, spec)))
        gap = max(gaps)
        ok &= gap < 1e-4
        out[beta] = gap
    sub = Params(3, 0.5)
    sub_exact = limit_cylinder_prob(sub, CylinderSpec.single(3, e, True)) == sub.p_beta
    ok &= sub_exact
    summary = ", ".join(f"beta={b}: {g:.1e}" for b, g in out.items())
    return CriterionResult(3, "cylinder convergence", ok, f"gaps at R=20 {summary} (bound 1e-4)", {"gaps": out})


def _path(length: int) -> list[Edge]:
    return [Edge(TreeAddress((0,) * d), 0) for d in range(length)]


def _star(k: int) -> list[Edge]:
    return [Edge(ROOT, i) for i in range(k)]


@_timed
def criterion_4(scale: float = 1.0) -> CriterionResult:
    """Normalization and one-edge consistency of the limit formula."""
    worst_norm = 0.0
    worst_cons = 0.0
    for k, beta in ((3, 0.5), (3, 2.0), (3, 5.0), (4, 1.5)):
        params = Params(k, beta)
        sets = [_path(L) for L in range(1, 6)] + [_star(k)]
        for B in sets:
            specs = [
                CylinderSpec.from_states(k, dict(zip(B, bits)))
                for bits in itertools.product((False, True), repeat=len(B))
            ]
            total = math.fsum(limit_cylinder_prob(params, s) for s in specs)
            worst_norm = max(worst_norm, abs(total - 1.0))
            for s in specs:
                p = limit_cylinder_prob(params, s)
                for f in s.boundary:
                    split = limit_cylinder_prob(params, s.extend(f, True)) + limit_cylinder_prob(
                        params, s.extend(f, False)
                    )
                    worst_cons = max(worst_cons, abs(split - p))
    ok = worst_norm <= 1e-12 and worst_cons <= 1e-12
    return CriterionResult(
        4,
        "normalization and consistency",
        ok,
        f"norm err {worst_norm:.1e}, consistency err {worst_cons:.1e}",
        {"norm": worst_norm, "consistency": worst_cons},
    )


@_timed
def criterion_5(scale: float = 1.0, seed: int = 20240501) -> CriterionResult:
    """Sampler root-edge marginal and root-star law."""
    params = Params(3, 2.0)
    n = _n(1_000_000, scale)
    t0 = time.perf_counter()
    batch = explore_batch(params, 30, n, seed)
    elapsed = time.perf_counter() - t0
    est = Estimate.from_counts(int(batch.edge_open(0).sum()), n, seed)
    z_edge = est.zscore(0.6)
    codes = np.bincount(batch.star_code(), minlength=8)
    worst = 0.0
    star = _star(3)
    for code in range(8):
        states = {e: bool(code >> i & 1) for i, e in enumerate(star)}
        target = limit_cylinder_prob(params, CylinderSpec.from_states(3, states))
        worst = max(worst, abs(Estimate.from_counts(int(codes[code]), n).zscore(target)))
    ok = abs(z_edge) <= 3 and worst <= 4 and elapsed < 60
    return CriterionResult(
        5,
        "sampler marginal",
        ok,
        f"P(e open) = {est.value:.5f} +- {est.stderr:.1e} (z={z_edge:+.2f}), star max |z| {worst:.2f}",
        {"estimate": est.as_dict(), "star_counts": codes.tolist(), "max_star_z": worst, "elapsed": elapsed},
    )


@_timed
def criterion_6(scale: float = 1.0, seed: int = 20240502) -> CriterionResult:
    """Survival to depth R decreases towards theta."""
    params = Params(3, 2.0)
    n = _n(1_000_000, scale)
    th = theta(params)
    ests = {}
    for R in (10, 20, 30):
        b = explore_batch(params, R, n, seed)
        ests[R] = Estimate.from_counts(int(b.survives.sum()), n, seed)
    decreasing = ests[10].value > ests[20].value > ests[30].value
    bracket = survival_reference(params, 30) - th
    dev = abs(ests[30].value - th)
    ok = decreasing and dev <= 3 * ests[30].stderr + bracket
    return CriterionResult(
        6,
        "theta reproduction",
        ok,
        f"survival {', '.join(f'R={R}: {e.value:.4f}' for R, e in ests.items())}; "
        f"|dev| {dev:.4f} <= 3sd + bracket {3 * ests[30].stderr + bracket:.4f}",
        {
            "estimates": {R: e.as_dict() for R, e in ests.items()},
            "theta": th,
            "bracket": bracket,
            "exact_truncated": {R: survival_reference(params, R) for R in ests},
        },
    )


@_timed
def criterion_7(scale: float = 1.0, seed: int = 20240503) -> CriterionResult:
    """Finite root clusters follow the critical percolation law."""
    params = Params(3, 2.0)
    n = _n(1_000_000, scale)
    stats = ClusterStats.from_batch(explore_batch(params, 30, n, seed))
    emp = stats.conditional_law(10)
    law = critical_cluster_law(3, 10)
    ref = law.as_array()
    tv = truncated_tv(emp, ref)
    ok = tv < 0.01
    return CriterionResult(
        7,
        "conditioned-finite cluster law",
        ok,
        f"TV on sizes 1..10 = {tv:.4f} (bound 0.01); tail mass emp {1 - emp.sum():.4f}, ref {law.tail:.4f}",
        {"empirical": emp.tolist(), "reference": ref.tolist(), "tv": tv, "n_finite": stats.n_finite},
    )


@_timed
def criterion_8(scale: float = 1.0, seed: int = 20240504) -> CriterionResult:
    """Two disjoint paths to depth R become rare."""
    params = Params(3, 2.0)
    n = _n(1_000_000, scale)
    ests = {}
    for R in (10, 20, 30):
        b = explore_batch(params, R, n, seed)
        ests[R] = Estimate.from_counts(int(b.two_disjoint.sum()), n, seed)
    decreasing = ests[10].value > ests[20].value > ests[30].value
    ok = decreasing and ests[30].value < 1e-2
    exact = {R: two_branch_reference(params, R) for R in ests}
    return CriterionResult(
        8,
        "one-endedness proxy",
        ok,
        f"P(two paths) {', '.join(f'R={R}: {e.value:.4f}' for R, e in ests.items())}; "
        f"exact at R=30 {exact[30]:.4f} (bound 0.01)",
        {"estimates": {R: e.as_dict() for R, e in ests.items()}, "exact_truncated": exact},
    )


@_timed
def criterion_9(scale: float = 1.0, seed: int = 20240505) -> CriterionResult:
    """Monotone couplings hold surely and the conditional mixture is unbiased."""
    n = _n(100_000, scale)
    cb = coupled_batch(3, (0.5, 2.0, INFINITY), 6, n, seed)
    beta_violations = int(sum((cb[i] & ~cb[i + 1]).any(axis=1).sum() for i in range(cb.shape[0] - 1)))
    params = Params(3, 2.0)
    e = Edge(ROOT, 0)
    w_open, w_closed = conditional_batch(params, 6, e, n, seed + 1)
    cond_violations = int((w_open & ~w_closed).any(axis=1).sum())

    m = _n(1_000_000, scale)
    w_open, w_closed = conditional_batch(params, 3, e, m, seed + 2)
    pe = limit_cylinder_prob(params, CylinderSpec.single(3, e, True))
    ball = TreeBall(3, 3)
    worst = 0.0
    zs = {}
    for idx in range(ball.n_edges):
        f = ball.edge(idx)
        if f == e or f.depth > 2:
            continue
        y = pe * w_open[:, idx] + (1 - pe) * w_closed[:, idx]
        sd = y.std(ddof=1) / math.sqrt(m)
        target = limit_marginal_prob(params, {f: True})
        z = (y.mean() - target) / sd
        zs[str(f)] = float(z)
        worst = max(worst, abs(z))
    ok = beta_violations == 0 and cond_violations == 0 and worst <= 3
    return CriterionResult(
        9,
        "coupling monotonicity",
        ok,
        f"beta-coupling violations {beta_violations}/{n}, conditional violations {cond_violations}/{n}, "
        f"mixture max |z| {worst:.2f}",
        {"beta_violations": beta_violations, "cond_violations": cond_violations, "mixture_z": zs},
    )


def _chi2_two_sample(a: np.ndarray, b: np.ndarray, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Chi-square homogeneity test; sparse cells are pooled into one."""
    table = np.stack([a, b]).astype(float)
    keep = table.sum(axis=0) > 0
    table = table[:, keep]
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    sparse = (expected < min_expected).any(axis=0)
    if sparse.any():
        pooled = table[:, sparse].sum(axis=1, keepdims=True)
        table = np.concatenate([table[:, ~sparse], pooled], axis=1)
    stat, p, dof, _ = chi2_contingency(table, correction=False)
    return float(stat), float(p), int(dof)


@_timed
def criterion_10(scale: float = 1.0, seed: int = 20240506) -> CriterionResult:
    """Depth-2 law does not depend on the truncation radius."""
    params = Params(3, 2.0)
    n = _n(1_000_000, scale)
    weights = 1 << np.arange(9)
    counts = {}
    for R, s in ((10, seed), (40, seed + 1)):
        cfg = limit_batch(params, R, n, s, window=2)
        counts[R] = np.bincount(cfg.astype(np.int64) @ weights, minlength=512)
    stat, p, dof = _chi2_two_sample(counts[10], counts[40])
    ok = p > 1e-4
    return CriterionResult(
        10,
        "restriction exactness",
        ok,
        f"chi2 = {stat:.1f} on {dof} dof, p = {p:.3f} (bound p > 1e-4)",
        {"chi2": stat, "p": p, "dof": dof},
    )


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


def run_all(scale: float = 1.0, only=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for num, fn in CRITERIA.items():
        if only and num not in only:
            continue
        res = fn(scale=scale)
        if echo:
            echo(res.line())
        results.append(res)
    return results


def format_table(results: list[CriterionResult]) -> str:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(lines)
