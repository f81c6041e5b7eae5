from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from prilsim.analytic import compose_predictions, delta_p, pril_m_deltas, pril_ml_deltas
from prilsim.metrics import fmt

S = 1_000_000
E_LISTEN = Fraction("303.3")


@pytest.mark.parametrize("tmin, expected", [
    (0, (0, 0)),
    (60 * S, (30 * S, 60 * S)),
    (600 * S, (300 * S, 600 * S)),
])
def test_pril_m_deltas(tmin, expected):
    assert pril_m_deltas(tmin) == expected


@pytest.mark.parametrize("tmin, r, expected", [
    (60 * S, 4, (7.5 * S, 15 * S)),
    (60 * S, 1, (30 * S, 60 * S)),
    (600 * S, 10, (30 * S, 60 * S)),
    (0, 4, (0, 0)),
])
def test_pril_ml_deltas(tmin, r, expected):
    assert pril_ml_deltas(tmin, r) == expected


def test_pril_ml_rounds_window_up_to_slots():
    # 61 s / 4 = 15.25 s -> 763 slots of 20 ms
    assert pril_ml_deltas(61 * S, 4)[1] == 763 * 20_000


def test_delta_p_examples():
    assert fmt(delta_p(4, E_LISTEN, 60 * S), 1) == "15.2"
    assert delta_p(4, E_LISTEN, 60 * S) == Fraction(15165, 1000)
    assert delta_p(1, E_LISTEN, 60 * S) == 0
    assert fmt(delta_p(2, E_LISTEN, 600 * S), 1) == "0.5"
    with pytest.raises(ValueError):
        delta_p(0, E_LISTEN, 60 * S)


@settings(max_examples=200)
@given(st.integers(1, 10**9), st.integers(1, 200))
def test_ml_never_worse_than_m_and_shrinks_with_r(tmin, r):
    m_mean, m_max = pril_m_deltas(tmin)
    a_mean, a_max = pril_ml_deltas(tmin, r)
    b_mean, b_max = pril_ml_deltas(tmin, r + 1)
    slot = 20_000
    assert a_max <= m_max + slot
    assert b_max <= a_max
    assert b_mean <= a_mean


@settings(max_examples=200)
@given(st.integers(1, 200), st.integers(1, 10**9))
def test_delta_p_grows_with_r(r, tmin):
    assert delta_p(r + 1, E_LISTEN, tmin) > delta_p(r, E_LISTEN, tmin) >= 0


def test_compose_with_reference_baselines():
    pred = compose_predictions(Fraction("1.731"), Fraction("17.960"), Fraction("68.6"), Fraction("0.4"), 60 * S, 4)
    assert (fmt(pred.pril_m_mean, 3), fmt(pred.pril_m_max, 3)) == ("31.731", "77.960")
    assert (fmt(pred.pril_ml_mean, 3), fmt(pred.pril_ml_max, 3)) == ("9.231", "32.960")
    assert fmt(pred.delta_p, 1) == "15.2"
    assert fmt(pred.power, 1) == "83.8"
    assert fmt(pred.power_listen, 1) == "15.6"
    assert pred.t_min == 60 and pred.r == 4
    assert set(pred.as_dict()) >= {"delta_p", "power", "power_listen"}
