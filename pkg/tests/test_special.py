import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsgd_bayes.special import erf, erf_inv, erfc
from oracles import erf_mp, erfc_mp, erfinv_mp


def test_erf_known_values():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(0.8427007929497149, abs=1e-15)
    assert erf(-2.0) == -erf(2.0)


@pytest.mark.parametrize("x", np.concatenate([np.linspace(-7, 7, 1401), [1e-300, 1e-8, 2.5, 2.4999999, 6.0]]))
def test_erf_matches_arbitrary_precision(x):
    assert abs(erf(x) - erf_mp(x)) <= 1e-12


@pytest.mark.parametrize("x", [0.1, 1.0, 2.4, 2.6, 5.0, 10.0, 20.0, 26.0])
def test_erfc_relative_accuracy_in_tail(x):
    ref = erfc_mp(x)
    assert abs(erfc(x) - ref) <= 1e-12 * ref


@given(st.floats(-30, 30))
def test_erf_is_odd_and_bounded(x):
    v = erf(x)
    assert erf(-x) == -v
    assert -1.0 <= v <= 1.0


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_erf_monotone(a, b):
    if a < b:
        assert erf(a) <= erf(b)


def test_erf_inverse_known_values():
    assert erf_inv(0.0) == 0.0
    assert erf_inv(0.02) == pytest.approx(0.017726395026678, abs=1e-13)
    assert abs(erf_inv(erf(1.3)) - 1.3) <= 1e-10


@settings(max_examples=500)
@given(st.floats(-0.999999999, 0.999999999))
def test_erf_inverse_round_trip(y):
    assert abs(erf(erf_inv(y)) - y) <= 1e-10


@pytest.mark.parametrize("y", [1e-12, 1e-6, 0.3, 0.9, 0.999, 1 - 1e-9, -0.5])
def test_erf_inverse_matches_arbitrary_precision(y):
    assert erf_inv(y) == pytest.approx(erfinv_mp(y), rel=1e-12)


@pytest.mark.parametrize("y", [1.0, -1.0, 1.5, float("nan")])
def test_erf_inverse_domain(y):
    with pytest.raises(ValueError):
        erf_inv(y)


def test_nan_propagates():
    assert math.isnan(erf(float("nan")))
