import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from arboreal import INFINITY, ParameterError, Params, Regime


def test_supercritical_constants():
    p = Params(3, 2)
    assert p.p_beta == pytest.approx(2 / 3, abs=1e-15)
    assert p.p_c == 0.5
    assert p.beta_c == 1.0
    assert p.lam == pytest.approx(2 / 3, abs=1e-15)
    assert p.regime is Regime.SUPERCRITICAL


@pytest.mark.parametrize(
    "k,beta,regime",
    [(3, 0.5, Regime.SUBCRITICAL), (3, 1.0, Regime.CRITICAL), (4, 0.5, Regime.CRITICAL), (5, 0.2, Regime.SUBCRITICAL)],
)
def test_percolation_regimes_have_lambda_one(k, beta, regime):
    p = Params(k, beta)
    assert p.regime is regime
    assert p.lam == 1.0
    assert p.is_percolation


def test_critical_detection_tolerates_rounding():
    assert Params(5, 1 / 3).regime is Regime.CRITICAL
    assert Params(5, 1 / 3 + 1e-9).regime is Regime.SUPERCRITICAL


def test_wusf():
    p = Params(3, "inf")
    assert p.beta == INFINITY
    assert p.regime is Regime.WUSF
    assert p.p_beta == 1.0
    assert p.lam == 0.0
    assert p.as_dict()["beta"] == "inf"


@pytest.mark.parametrize("k,beta", [(2, 1.0), (3, 0.0), (3, -1.0), (3.5, 1.0), (True, 1.0), (3, "abc")])
def test_rejects_bad_parameters(k, beta):
    with pytest.raises(ParameterError):
        Params(k, beta)


@given(st.integers(3, 12), st.fractions(min_value=Fraction(1, 100), max_value=100))
def test_lambda_branches(k, beta):
    p = Params(k, float(beta))
    # exact lambda from rationals
    lam = Fraction(k - 1, (k - 2)) / (1 + beta)
    if beta >= Fraction(1, k - 2):
        assert p.lam == pytest.approx(float(lam), rel=1e-14)
        assert 0 < p.lam <= 1
    else:
        assert p.lam == 1.0
        assert lam > 1


def test_lambda_continuous_at_beta_c():
    for k in range(3, 9):
        bc = 1 / (k - 2)
        below = Params(k, bc * (1 - 1e-9)).lam
        above = Params(k, bc * (1 + 1e-9)).lam
        assert math.isclose(below, above, abs_tol=1e-8)
