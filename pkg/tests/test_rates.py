import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavirs.bcd import DecisionState, make_setting, random_init
from uavirs.channel import network_quadratic_forms
from uavirs.rates import (benchmark_rates, dc_split_power, dc_split_theta, distance_decoding_order,
                          expected_noma_rate, flatten_power, is_valid_order, round_order, sum_rate,
                          user_rates)
from uavirs.sca.irs import lift


def test_distance_order_examples():
    q = np.zeros(3)
    users = np.array([[0, 0, -50.0], [0, 0, -80.0], [0, 0, -120.0]])
    a = distance_decoding_order(q, users)
    assert a[0, 1] == a[0, 2] == a[1, 2] == 1
    assert a[1, 0] == a[2, 0] == a[2, 1] == 0
    tie = distance_decoding_order(q, np.array([[0, 0, -50.0], [0, 0, 50.0]]))
    assert tie[0, 1] == 1 and tie[1, 0] == 0
    one = distance_decoding_order(q, np.array([[1.0, 0, 0]]))
    assert one.shape == (1, 1) and is_valid_order(one)


@given(st.lists(st.floats(1, 1000), min_size=1, max_size=6))
def test_distance_order_is_total(d):
    users = np.column_stack([np.zeros(len(d)), np.zeros(len(d)), -np.array(d)])
    a = distance_decoding_order(np.zeros(3), users)
    assert is_valid_order(a)
    assert np.array_equal(round_order(a + 0.3 * (0.5 - a)), a)


def test_single_user_rate():
    eta = np.array([[1.226e-7]])
    r = expected_noma_rate(0, 0, eta, [np.array([0.1])], [np.ones((1, 1))], 1e-11)
    assert r == pytest.approx(math.log2(1 + 1.226e-7 * 0.1 / 1e-11), rel=1e-12)
    assert r == pytest.approx(10.26, abs=5e-3)


def test_two_user_rates():
    eta = np.array([[2e-9, 1e-8]])  # user 0 weak, user 1 strong
    P = [np.array([0.8, 0.2])]
    A = [np.array([[1.0, 0.0], [1.0, 1.0]])]  # user 1 decoded after user 0
    strong = expected_noma_rate(0, 1, eta, P, A, 1e-11)
    weak = expected_noma_rate(0, 0, eta, P, A, 1e-11)
    assert strong == pytest.approx(math.log2(201), rel=1e-12)
    assert strong == pytest.approx(7.651, abs=1e-3)
    assert weak == pytest.approx(math.log2(1 + 1.6e-9 / 4.1e-10), rel=1e-12)
    assert weak == pytest.approx(2.293, abs=1e-3)
    assert expected_noma_rate(0, 0, eta, [np.array([0.0, 0.2])], A, 1e-11) == 0.0


def test_benchmarks(ref):
    eta = np.full((2, 6), 1.226e-7)
    r = benchmark_rates("if", eta, ref.p_max, ref)
    assert r[0] == pytest.approx(math.log2(1 + 1.226e-8 / 5e-12) / 6, rel=1e-12)
    assert r[0] == pytest.approx(1.8767, abs=1e-4)  # (1/6) log2(2453)
    solo = ref.with_(groups=ref.groups[:1], p_max=(0.1,))
    r = benchmark_rates("oma", np.array([[1.226e-7] * 3]), [0.1], solo)
    assert r[0] == pytest.approx(math.log2(1 + 1.226e-7 * 0.1 / 1e-11) / 3, rel=1e-12)
    quiet = benchmark_rates("oma", eta, [0.1, 0.0], ref)
    assert quiet[0] == pytest.approx(math.log2(1 + 1.226e-8 / 1e-11) / 3, rel=1e-12)


def test_sum_rate_additive(ref):
    setting = make_setting(ref)
    st_ = random_init(3, setting)
    per = setting.rates(st_.Q, st_.theta, st_.P, st_.A)
    assert sum_rate(st_, ref) == pytest.approx(per.sum(), rel=1e-13)
    zero = DecisionState(st_.Q, [0 * p for p in st_.P], st_.A, st_.theta)
    assert sum_rate(zero, ref) == 0.0


@pytest.mark.parametrize("scheme", ["noma", "oma", "if"])
def test_dc_split_theta_identity(ref, rng, scheme):
    setting = make_setting(ref, scheme)
    st_ = random_init(1, setting)
    quad = network_quadratic_forms(ref, st_.Q)
    for _ in range(20):
        th = rng.uniform(0, 2 * np.pi, ref.M)
        V = lift(th)
        x = np.array([np.real(np.sum(quad.H(j, 0) * V.T)) for j in range(2)])
        rates = user_rates(scheme, quad.gains(th), st_.P, st_.A, ref.channel.sigma2, ref.group_sizes, ref.p_max)
        for k, i, u in ((0, 0, 0), (1, 2, 5)):
            x = np.array([np.real(np.sum(quad.H(j, u) * V.T)) for j in range(2)])
            sp = dc_split_theta(k, i, quad, st_.P, st_.A, ref.channel.sigma2, scheme=scheme,
                                sizes=list(ref.group_sizes), p_max=ref.p_max)
            assert sp.value(x) == pytest.approx(rates[u], abs=1e-10)


def test_dc_split_degenerate():
    quad = type("Q", (), {"varpi": np.array([[3e-9]])})()
    P, A = [np.array([0.1])], [np.ones((1, 1))]
    sp = dc_split_theta(0, 0, quad, P, A, 1e-11)
    assert sp.g(np.zeros(1)) == pytest.approx(math.log2(1e-11))
    assert sp.f_const - sp.g_const == pytest.approx(3e-9 * 0.1)


@pytest.mark.parametrize("scheme", ["noma", "oma"])
def test_dc_split_power_identity(ref, rng, scheme):
    setting = make_setting(ref, scheme)
    st_ = random_init(4, setting)
    eta = setting.gains(st_.Q, st_.theta)
    for _ in range(20):
        if scheme == "noma":
            P = [np.sort(rng.uniform(0, 0.03, 3))[::-1] for _ in range(2)]
        else:
            P = [rng.uniform(0, 0.1, 1) for _ in range(2)]
        x = flatten_power(scheme, P)
        rates = user_rates(scheme, eta, P, st_.A, ref.channel.sigma2, ref.group_sizes, ref.p_max)
        for k in range(2):
            for i in range(3):
                sp = dc_split_power(k, i, eta, st_.A, ref.channel.sigma2, scheme=scheme, sizes=list(ref.group_sizes))
                assert sp.value(x) == pytest.approx(rates[3 * k + i], abs=1e-10)
    sp = dc_split_power(0, 0, eta, st_.A, ref.channel.sigma2, sizes=list(ref.group_sizes))
    assert sp.f(np.zeros(6)) == pytest.approx(math.log2(ref.channel.sigma2))
