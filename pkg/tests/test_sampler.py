import math

import numpy as np
import pytest

from arboreal import ParameterError, Params
from arboreal.limit import CylinderSpec, limit_cylinder_prob, limit_marginal_prob, theta
from arboreal.sampler import (
    conditional_batch,
    conditional_source_probs,
    coupled_batch,
    explore_batch,
    limit_batch,
    percolation_batch,
    sample_conditional_edge,
    sample_coupled_betas,
    sample_percolation,
    sample_wired_limit,
)
from arboreal.tree import ROOT, Edge, EdgeConfig, TreeAddress, TreeBall, is_forest

E0 = Edge(ROOT, 0)


def test_percolation_extremes_and_marginal():
    ball = TreeBall(3, 3)
    assert sample_percolation(3, 3, 0.0, 1) == EdgeConfig.empty(ball)
    assert sample_percolation(3, 3, 1.0, 1) == EdgeConfig.full(ball)
    freq = percolation_batch(3, 1, 0.5, 100_000, seed=3).mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 4 * math.sqrt(0.25 / 100_000))
    with pytest.raises(ParameterError):
        sample_percolation(3, 2, 1.5, 0)


def test_radius_validation():
    with pytest.raises(ParameterError):
        sample_wired_limit(Params(3, 2.0), 0, 1)
    with pytest.raises(ParameterError):
        limit_batch(Params(3, 2.0), 40, 1, 1)
    with pytest.raises(ParameterError):
        limit_batch(Params(3, 2.0), 4, 1, 1, window=5)


@pytest.mark.parametrize("beta", [0.5, 2.0, 5.0, "inf"])
def test_sample_parts_invariants(beta):
    params = Params(3, beta)
    R = 6
    ball = TreeBall(3, R)
    for seed in range(20):
        s = sample_wired_limit(params, R, seed)
        assert is_forest(ball, s.omega)
        assert s.omega0.issubset(s.omega)
        assert np.all(~s.U | s.eta)
        parent_closed = np.ones(ball.n_vertices, dtype=bool)
        parent_closed[1:] = ~s.omega0.bits
        assert np.array_equal(s.U, s.eta & parent_closed)
        # every path edge continues a path from a vertex of U
        on_path = np.zeros(ball.n_vertices, dtype=bool)
        for v in np.flatnonzero(s.U):
            u = int(v)
            while ball.depth[u] < R:
                on_path[u] = True
                c = TreeAddress.from_index(3, u).child(s.succ[u]).index(3)
                u = c
        path_bits = s.path_edges().bits
        for i in np.flatnonzero(path_bits):
            assert on_path[ball.parent[i + 1]]
        assert set(s.succ) == set(np.flatnonzero(s.active & (ball.depth < R + 1)).tolist())
        if params.is_percolation:
            assert not s.eta.any() and s.omega == s.omega0


def test_beta_c_is_critical_percolation():
    a = limit_batch(Params(3, 1.0), 5, 2000, 11)
    b = percolation_batch(3, 5, 0.5, 2000, 11)
    assert np.array_equal(a, b)


def test_subcritical_uses_p_beta():
    p = Params(3, 0.5)
    a = limit_batch(p, 4, 1000, 2)
    assert np.array_equal(a, percolation_batch(3, 4, p.p_beta, 1000, 2))


def test_batch_is_reproducible_and_splittable():
    p = Params(3, 2.0)
    whole = limit_batch(p, 5, 3000, 99)
    assert np.array_equal(whole, limit_batch(p, 5, 3000, 99))
    halves = np.concatenate([limit_batch(p, 5, 1000, 99), limit_batch(p, 5, 2000, 99, start=1000)])
    assert np.array_equal(whole, halves)
    assert np.array_equal(whole, limit_batch(p, 5, 3000, 99, threads=3))
    assert not np.array_equal(whole, limit_batch(p, 5, 3000, 100))


def test_window_equals_restriction_of_full_sample():
    p = Params(3, 2.0)
    full = limit_batch(p, 10, 500, 4)
    for r in (1, 2, 4):
        win = limit_batch(p, 10, 500, 4, window=r)
        assert np.array_equal(win, full[:, : TreeBall(3, r).n_edges])
        # and the law does not depend on R
        assert np.array_equal(win, limit_batch(p, 7, 500, 4, window=r))


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_root_star_law(beta):
    params = Params(3, beta)
    n = 1_000_000
    b = explore_batch(params, 30, n, seed=31)
    codes = np.bincount(b.star_code(), minlength=8)
    star = [Edge(ROOT, i) for i in range(3)]
    for code in range(8):
        target = limit_cylinder_prob(params, CylinderSpec.from_states(3, {e: bool(code >> i & 1) for i, e in enumerate(star)}))
        sd = math.sqrt(target * (1 - target) / n)
        assert abs(codes[code] / n - target) < 4 * sd


def test_depth_two_marginals():
    params = Params(3, 2.0)
    n = 400_000
    cfg = limit_batch(params, 2, n, 8)
    ball = TreeBall(3, 2)
    for i in range(ball.n_edges):
        target = limit_marginal_prob(params, {ball.edge(i): True})
        assert abs(cfg[:, i].mean() - target) < 4 * math.sqrt(target * (1 - target) / n)


def test_survival_decreases_to_theta():
    params = Params(3, 2.0)
    vals = [explore_batch(params, R, 200_000, 6).survives.mean() for R in (5, 10, 20, 40)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > theta(params)


def test_coupled_betas():
    cb = coupled_batch(3, [0.5, 2.0, "inf"], 6, 100_000, 1)
    for i in range(2):
        assert not (cb[i] & ~cb[i + 1]).any()
    same = coupled_batch(3, [2.0, 2.0], 4, 1000, 3)
    assert np.array_equal(same[0], same[1])
    configs = sample_coupled_betas(3, [0.3, 1.0, 4.0], 5, 7)
    assert configs[0].issubset(configs[1]) and configs[1].issubset(configs[2])
    # each coordinate has the marginal of its own sampler
    assert np.array_equal(cb[1], limit_batch(Params(3, 2.0), 6, 100_000, 1))
    with pytest.raises(ParameterError):
        coupled_batch(3, [2.0, 0.5], 3, 10, 0)
    with pytest.raises(ParameterError):
        coupled_batch(3, ["inf", 2.0], 3, 10, 0)


def test_wusf_contains_everything_below():
    cb = coupled_batch(4, [1.0, "inf"], 4, 20_000, 5)
    assert not (cb[0] & ~cb[1]).any()


def test_conditional_source_probs():
    a_open, a_closed = conditional_source_probs(Params(3, 2.0))
    assert a_open == pytest.approx(1 / 3, abs=1e-14)
    assert a_closed == pytest.approx(1 / 2, abs=1e-14)
    assert conditional_source_probs(Params(3, 1.0)) == (0.0, 0.0)
    x = 4 * 2.0  # beta * (k - 2) for k = 6, beta = 2
    rho = (x - 1) / x
    a_open, a_closed = conditional_source_probs(Params(6, 2.0))
    assert a_closed == pytest.approx(rho, abs=1e-13)
    assert a_open == pytest.approx(rho / (1 + rho), abs=1e-13)
    with pytest.raises(ParameterError):
        conditional_source_probs(Params(3, 0.5))


@pytest.mark.parametrize("beta", [1.5, 2.0, 4.0])
def test_conditional_source_probs_against_monte_carlo(beta):
    """Frequency of the root reaching depth R outside T(e), given e's state, from the unconditioned sampler.

    Compared with the exact truncated value, whose large-R limit must be the
    derived source probability.
    """
    params = Params(3, beta)
    k, R, n = 3, 30, 1_000_000
    b = explore_batch(params, R, n, seed=17)
    e_open = b.edge_open(0)
    other = (b.reach & np.uint64(0b110)) != 0
    th = theta(params)
    pc = params.p_c
    g = pc * _perc_reach(k, pc, R - 1)
    G = 1 - (1 - g) ** (k - 1)
    pe = pc + (1 - pc) * th / k
    joint_open = pc * (th * (k - 1) / k + (1 - th * (k - 1) / k) * G) + (1 - pc) * th / k * G
    joint_closed = (1 - pc) * (th * (k - 1) / k + (1 - th) * G)
    exp_open = joint_open / pe
    exp_closed = joint_closed / (1 - pe)
    f_open = other[e_open].mean()
    f_closed = other[~e_open].mean()
    assert abs(f_open - exp_open) < 4 * math.sqrt(exp_open * (1 - exp_open) / e_open.sum())
    assert abs(f_closed - exp_closed) < 4 * math.sqrt(exp_closed * (1 - exp_closed) / (~e_open).sum())
    a_open, a_closed = conditional_source_probs(params)
    lim_open = pc * th * (k - 1) / k / pe
    lim_closed = (1 - pc) * th * (k - 1) / k / (1 - pe)
    assert a_open == pytest.approx(lim_open, abs=1e-12)
    assert a_closed == pytest.approx(lim_closed, abs=1e-12)


def _perc_reach(k, p, depth):
    h = 1.0
    for _ in range(depth):
        h = 1 - (1 - p * h) ** (k - 1)
    return h


def test_conditional_coupling_nested_and_clears_e():
    params = Params(3, 2.0)
    w_open, w_closed = conditional_batch(params, 6, E0, 100_000, 12)
    assert not (w_open & ~w_closed).any()
    assert not w_open[:, 0].any() and not w_closed[:, 0].any()
    a, b = sample_conditional_edge(params, 4, Edge(ROOT, 2), 3)
    assert a.issubset(b)
    assert Edge(ROOT, 2) not in b


def test_conditional_at_beta_c_is_percolation():
    w_open, w_closed = conditional_batch(Params(3, 1.0), 4, E0, 2000, 8)
    perc = percolation_batch(3, 4, 0.5, 2000, 8)
    perc[:, 0] = False
    assert np.array_equal(w_open, perc)
    assert np.array_equal(w_closed, perc)


def test_conditional_mixture_reproduces_marginals():
    params = Params(3, 2.0)
    n = 1_000_000
    w_open, w_closed = conditional_batch(params, 2, E0, n, 21)
    pe = 0.6
    ball = TreeBall(3, 2)
    for i in range(1, ball.n_edges):
        y = pe * w_open[:, i] + (1 - pe) * w_closed[:, i]
        sd = y.std() / math.sqrt(n)
        target = limit_marginal_prob(params, {ball.edge(i): True})
        assert abs(y.mean() - target) < 3.5 * sd


def test_conditional_conditionals_match_limit():
    """Given e open (closed), the law of the other root edges matches the limit conditionals."""
    params = Params(3, 2.0)
    n = 500_000
    w_open, w_closed = conditional_batch(params, 1, E0, n, 5)
    f = Edge(ROOT, 1)
    p_e = limit_cylinder_prob(params, CylinderSpec.single(3, E0, True))
    for arr, state, w in ((w_open, True, p_e), (w_closed, False, 1 - p_e)):
        target = limit_cylinder_prob(params, CylinderSpec.from_states(3, {E0: state, f: True})) / w
        assert abs(arr[:, 1].mean() - target) < 4 * math.sqrt(target * (1 - target) / n)


def test_conditional_rejects_bad_input():
    with pytest.raises(ParameterError):
        conditional_batch(Params(3, 0.5), 3, E0, 10, 0)
    with pytest.raises(ParameterError):
        conditional_batch(Params(3, 2.0), 3, Edge(TreeAddress((0,)), 0), 10, 0)
