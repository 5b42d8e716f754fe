import random

import pytest
from hypothesis import given, settings, strategies as st

from wormhole_nc import minplus as mp
from wormhole_nc.grid import OracleHorizonError, grid_oracle, rate_latency_envelope

from _oracle import check_case, random_case

A = mp.ArrivalCurve
S = mp.ServiceCurve


def test_convolve_takes_min_rate_and_adds_latency():
    assert mp.convolve(S(10, 2), S(4, 5)) == S(4, 7)


def test_convolve_identity():
    s = S(3, 1.5)
    assert mp.convolve(s, mp.IDENTITY_SERVICE) == s
    assert mp.convolve_all([]) == mp.IDENTITY_SERVICE


def test_delay_shift():
    assert mp.delay_shift(S(10, 2), 0.8) == S(10, 2.8)
    with pytest.raises(ValueError):
        mp.delay_shift(S(10, 2), -1)


def test_deconvolve_and_vdev():
    assert mp.deconvolve(A(20, 3), S(10, 6)) == A(38, 3)
    assert mp.vdev(A(20, 3), S(10, 6)) == 38


def test_hdev():
    assert mp.hdev(A(64, 0.64), S(10, 5)) == pytest.approx(11.4)


def test_residual_blind():
    r = mp.residual_blind(S(10, 2), A(15, 4))
    assert r.rate == pytest.approx(6)
    assert r.latency == pytest.approx(35 / 6)


def test_residual_with_nothing_is_unchanged():
    s = S(10, 2)
    assert mp.residual_blind(s, mp.NULL_ARRIVAL) is s


@pytest.mark.parametrize("cross", [A(1, 10), A(0, 12)])
def test_residual_saturated(cross):
    with pytest.raises(mp.InstabilityError):
        mp.residual_blind(S(10, 2), cross)


def test_unstable_delay_raises():
    with pytest.raises(mp.InstabilityError):
        mp.hdev(A(1, 11), S(10, 0))
    with pytest.raises(mp.InstabilityError):
        mp.deconvolve(A(1, 11), S(10, 0))


def test_equal_rates_are_stable():
    assert mp.hdev(A(10, 10), S(10, 0)) == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [lambda: A(-1, 1), lambda: A(1, -1),
                                 lambda: S(0, 1), lambda: S(1, -1)])
def test_curve_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_curves_evaluate():
    assert A(5, 2)(3) == 11 and A(5, 2)(-1) == 0
    assert S(4, 2)(1) == 0 and S(4, 2)(5) == 12


def test_sum_arrivals():
    assert mp.sum_arrivals([A(1, 2), A(3, 4)]) == A(4, 6)
    assert mp.sum_arrivals([]) == mp.NULL_ARRIVAL


# --- brute force -------------------------------------------------------------

def test_oracle_examples():
    assert grid_oracle("hdev", [A(64, 0.64), S(10, 5)], 0.01, 40) == pytest.approx(11.4, abs=0.01)
    assert grid_oracle("vdev", [A(20, 3), S(10, 6)], 0.01, 40) == pytest.approx(38, abs=0.03)
    conv = grid_oracle("convolve", [S(10, 2), S(4, 5)], 0.05, 20)
    env = rate_latency_envelope(conv)
    assert env.rate == pytest.approx(4, rel=1e-6)
    assert env.latency == pytest.approx(7, abs=0.05)


def test_oracle_rejects_short_horizon():
    with pytest.raises(OracleHorizonError):
        grid_oracle("hdev", [A(64, 0.64), S(10, 5)], 0.01, 5)


def test_oracle_catches_a_wrong_closed_form(monkeypatch):
    monkeypatch.setattr(mp, "convolve", lambda a, b: S(max(a.rate, b.rate), a.latency + b.latency))
    ok, _ = check_case("convolve", [S(10, 2), S(4, 5)])
    assert not ok


@pytest.mark.parametrize("seed", range(40))
def test_closed_forms_match_oracle(seed):
    op, curves = random_case(random.Random(seed))
    ok, msg = check_case(op, curves)
    assert ok, msg


# --- algebraic properties -------------------------------------------------------

rates = st.floats(0.1, 1e3)
times = st.floats(0, 1e3)
services = st.builds(S, rates, times)
arrivals = st.builds(A, st.floats(0, 1e3), st.floats(0, 1e3))


@given(services, services, services)
def test_convolve_commutative_associative(a, b, c):
    assert mp.convolve(a, b) == mp.convolve(b, a)
    left, right = mp.convolve(mp.convolve(a, b), c), mp.convolve(a, mp.convolve(b, c))
    assert left.rate == right.rate
    assert left.latency == pytest.approx(right.latency)


@given(arrivals, services, services)
def test_concatenation_pays_burst_once(a, s1, s2):
    if a.rate >= min(s1.rate, s2.rate):
        return
    whole = mp.hdev(a, mp.convolve(s1, s2))
    split = mp.hdev(a, s1) + mp.hdev(mp.deconvolve(a, s1), s2)
    assert whole <= split * (1 + 1e-9) + 1e-9


@given(arrivals, services, st.floats(0, 100))
def test_delay_grows_with_latency(a, s, d):
    if a.rate >= s.rate:
        return
    assert mp.hdev(a, mp.delay_shift(s, d)) == pytest.approx(mp.hdev(a, s) + d)


@given(arrivals, services, arrivals)
def test_residual_is_below_the_server(cross, s, a):
    if cross.rate >= s.rate * 0.999:
        return
    r = mp.residual_blind(s, cross)
    assert r.rate <= s.rate and r.latency >= s.latency * (1 - 1e-12)
    for t in (0.0, s.latency, r.latency, 2 * r.latency + 1):
        assert r(t) <= s(t) + 1e-9 * max(1.0, s(t))


@settings(max_examples=50)
@given(arrivals, services)
def test_backlog_and_delay_consistent(a, s):
    if a.rate >= s.rate:
        return
    # the output burst equals the backlog bound for these curve shapes
    assert mp.deconvolve(a, s).burst == pytest.approx(mp.vdev(a, s))
    assert mp.hdev(a, s) >= s.latency
