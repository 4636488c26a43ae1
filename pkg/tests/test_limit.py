import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from arboreal import ParameterError, Params
from arboreal.exact import exact_cylinder_prob
from arboreal.limit import (
    CylinderSpec,
    boundary_classes,
    conditional_no_survival,
    eta_probabilities,
    limit_cylinder_prob,
    limit_marginal_prob,
    q_factor,
    restricted_finiteness_prob,
    theta,
)
from arboreal.tree import ROOT, Edge, TreeAddress, WiredBall

E0 = Edge(ROOT, 0)


def Q_exact(m: int, lam: Fraction) -> Fraction:
    return lam**m + m * (1 - lam) * lam ** (m - 1) if m else Fraction(1)


def test_q_factor_values():
    lam = 2 / 3
    assert q_factor(2, lam) == pytest.approx(8 / 9, abs=1e-15)
    assert q_factor(3, lam) == pytest.approx(20 / 27, abs=1e-15)
    assert q_factor(4, lam) == pytest.approx(16 / 27, abs=1e-15)
    assert q_factor(0, 0.3) == 1.0
    assert all(q_factor(m, 1.0) == 1.0 for m in range(10))
    with pytest.raises(ParameterError):
        q_factor(-1, 0.5)


def test_q_factor_against_rationals():
    lam = Fraction(2, 3)
    for m in range(8):
        assert q_factor(m, float(lam)) == pytest.approx(float(Q_exact(m, lam)), rel=1e-14)


def test_boundary_classes_examples():
    assert boundary_classes(CylinderSpec.single(3, E0, True)) == [4]
    assert boundary_classes(CylinderSpec.single(3, E0, False)) == [2, 2]
    path = {E0: True, Edge(TreeAddress((0,)), 0): True}
    spec = CylinderSpec.from_states(3, path)
    assert boundary_classes(spec) == [5]
    assert sum(boundary_classes(spec)) == len(spec.boundary) == 3 + 1 * 2


def test_boundary_classes_sum_to_boundary_size():
    k = 4
    star = [Edge(ROOT, i) for i in range(k)]
    for bits in itertools.product((False, True), repeat=k):
        spec = CylinderSpec.from_states(k, dict(zip(star, bits)))
        assert sum(boundary_classes(spec)) == len(spec.boundary) == k * (k - 1)


def test_cylinder_spec_validation():
    with pytest.raises(ParameterError):
        CylinderSpec.single(3, Edge(TreeAddress((0,)), 0))
    with pytest.raises(ParameterError):
        CylinderSpec(3, frozenset({E0, Edge(TreeAddress((1,)), 0)}), frozenset())
    with pytest.raises(ParameterError):
        CylinderSpec(3, frozenset({E0}), frozenset({Edge(ROOT, 1)}))
    with pytest.raises(ParameterError):
        CylinderSpec.single(3, E0).extend(E0, True)
    empty = CylinderSpec(3, frozenset(), frozenset())
    assert limit_cylinder_prob(Params(3, 2.0), empty) == 1.0


def test_single_edge_limit():
    assert limit_cylinder_prob(Params(3, 2.0), CylinderSpec.single(3, E0, True)) == pytest.approx(0.6, abs=1e-15)


@pytest.mark.parametrize("beta", [0.2, 0.5, 1.0])
def test_subcritical_limit_is_percolation(beta):
    p = Params(3, beta)
    spec = CylinderSpec.from_states(3, {E0: True, Edge(ROOT, 1): False, Edge(TreeAddress((0,)), 1): True})
    assert limit_cylinder_prob(p, spec) == p.p_beta**2 * (1 - p.p_beta)


@pytest.mark.parametrize("k,beta", [(3, 2.0), (4, 1.0)])
def test_all_closed_star(k, beta):
    p = Params(k, beta)
    spec = CylinderSpec.from_states(k, {Edge(ROOT, i): False for i in range(k)})
    assert limit_cylinder_prob(p, spec) == pytest.approx((1 - p.p_beta) ** k / q_factor(k, p.lam), rel=1e-14)


def test_limit_rejects_wusf_and_k_mismatch():
    with pytest.raises(ParameterError):
        limit_cylinder_prob(Params(3, "inf"), CylinderSpec.single(3, E0))
    with pytest.raises(ParameterError):
        limit_cylinder_prob(Params(4, 2.0), CylinderSpec.single(3, E0))


# independent oracle: the finite-volume DP at a large radius
@pytest.mark.parametrize("k,beta", [(3, 2.0), (3, 5.0), (4, 1.5)])
def test_limit_matches_large_ball(k, beta):
    ball = WiredBall(k, 70)
    p = Params(k, beta)
    u = TreeAddress((0,))
    cases = [
        {E0: True},
        {E0: False},
        {E0: True, Edge(ROOT, 1): True},
        {E0: True, Edge(u, 0): False, Edge(u, 1): True},
        {Edge(ROOT, i): i % 2 == 0 for i in range(k)},
        {E0: False, Edge(u, 0): True, Edge(TreeAddress((0, 0)), 1): True},
    ]
    for states in cases:
        spec = CylinderSpec.from_states(k, states)
        assert exact_cylinder_prob(ball, beta, spec) == pytest.approx(limit_cylinder_prob(p, spec), abs=1e-7)


@st.composite
def specs(draw, k):
    """Random connected edge sets containing a root edge, with random states."""
    n = draw(st.integers(1, 6))
    edges = [Edge(ROOT, draw(st.integers(0, k - 1)))]
    while len(edges) < n:
        base = draw(st.sampled_from(edges))
        v = draw(st.sampled_from([base.lower, base.upper]))
        cand = Edge(v, draw(st.integers(0, v.n_children(k) - 1)))
        if cand not in edges:
            edges.append(cand)
    states = {e: draw(st.booleans()) for e in edges}
    return CylinderSpec.from_states(k, states)


params_strategy = st.sampled_from([3, 4, 5]).flatmap(
    lambda k: st.tuples(st.just(k), st.floats(0.05, 20.0), specs(k))
)


@settings(max_examples=200, deadline=None)
@given(params_strategy, st.data())
def test_kolmogorov_consistency(ksb, data):
    k, beta, spec = ksb
    p = Params(k, beta)
    f = data.draw(st.sampled_from(sorted(spec.boundary)))
    whole = limit_cylinder_prob(p, spec)
    split = limit_cylinder_prob(p, spec.extend(f, True)) + limit_cylinder_prob(p, spec.extend(f, False))
    assert abs(whole - split) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(params_strategy)
def test_normalization(ksb):
    k, beta, spec = ksb
    assume(len(spec.B) <= 6)
    p = Params(k, beta)
    B = sorted(spec.B)
    total = math.fsum(
        limit_cylinder_prob(p, CylinderSpec.from_states(k, dict(zip(B, bits))))
        for bits in itertools.product((False, True), repeat=len(B))
    )
    assert abs(total - 1.0) <= 1e-12


def test_marginal_extends_spine():
    p = Params(3, 2.0)
    deep = Edge(TreeAddress((1, 0)), 1)
    via_marginal = limit_marginal_prob(p, {deep: True})
    exact = exact_cylinder_prob(WiredBall(3, 70), 2.0, {deep: True})
    assert via_marginal == pytest.approx(exact, abs=1e-7)
    assert limit_marginal_prob(p, {E0: True}) == limit_cylinder_prob(p, CylinderSpec.single(3, E0, True))
    assert limit_marginal_prob(p, {}) == 1.0
    with pytest.raises(ParameterError):
        limit_marginal_prob(p, {Edge(TreeAddress((0,) * 20), 0): True}, max_extra=4)


def test_theta_values():
    assert theta(Params(3, 1.0)) == 0.0
    assert theta(Params(3, 2.0)) == pytest.approx(0.6, abs=1e-15)
    assert theta(Params(3, 1e9)) == pytest.approx(1.0, abs=1e-8)
    assert theta(Params(3, "inf")) == 1.0
    assert theta(Params(3, 0.5)) == 0.0
    grid = [theta(Params(4, b)) for b in (0.6, 1, 2, 5, 50)]
    assert all(b > a for a, b in zip(grid, grid[1:]))


def test_restricted_finiteness():
    p = Params(3, 2.0)
    assert restricted_finiteness_prob(p, 0, 3) == pytest.approx(0.4, abs=1e-15)
    assert restricted_finiteness_prob(p, 0, 3) == pytest.approx(1 - theta(p), abs=1e-15)
    assert restricted_finiteness_prob(p, 2, 1) == pytest.approx(0.8, abs=1e-15)
    for split in ((0, 3), (1, 2), (2, 1)):
        assert restricted_finiteness_prob(Params(3, 1.0), *split) == 1.0
    for bad in ((3, 0), (1, 1), (-1, 4)):
        with pytest.raises(ParameterError):
            restricted_finiteness_prob(p, *bad)
    with pytest.raises(ParameterError):
        restricted_finiteness_prob(Params(3, 0.5), 1, 2)


def test_conditional_no_survival():
    assert conditional_no_survival(Params(3, 1.0)) == 0.0
    assert conditional_no_survival(Params(3, 2.0)) == pytest.approx(0.5, abs=1e-15)
    assert conditional_no_survival(Params(3, "inf")) == 1.0
    with pytest.raises(ParameterError):
        conditional_no_survival(Params(3, 0.9))


def test_eta_probabilities():
    assert eta_probabilities(Params(3, 0.5)) == (0.0, 0.0)
    assert eta_probabilities(Params(3, 1.0)) == (0.0, 0.0)
    root, other = eta_probabilities(Params(3, 2.0))
    assert (root, other) == pytest.approx((0.6, 0.5))
    assert eta_probabilities(Params(3, "inf")) == (1.0, 1.0)


def test_continuity_at_beta_c():
    for k in (3, 4, 6):
        just_above = Params(k, (1 / (k - 2)) * (1 + 1e-10))
        assert theta(just_above) == pytest.approx(0.0, abs=1e-8)
        assert conditional_no_survival(just_above) == pytest.approx(0.0, abs=1e-8)
        assert just_above.lam == pytest.approx(1.0, abs=1e-8)
        spec = CylinderSpec.single(k, E0, True)
        assert limit_cylinder_prob(just_above, spec) == pytest.approx(just_above.p_c, abs=1e-8)


@pytest.mark.parametrize("beta", [0.3, 1.0, 1.5, 2.0, 4.0, 10.0])
def test_adjacent_edges_negatively_correlated(beta):
    p = Params(3, beta)
    f = Edge(ROOT, 1)
    both = limit_cylinder_prob(p, CylinderSpec.from_states(3, {E0: True, f: True}))
    single = limit_cylinder_prob(p, CylinderSpec.single(3, E0, True))
    assert both <= single * single + 1e-15
