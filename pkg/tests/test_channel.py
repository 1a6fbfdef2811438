import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavirs.channel import (direct_gain, direction_cosine, expected_gain, gain_quadratic_form, link_terms,
                            network_gains, phase_vector, sample_effective_gain, sample_gains, ula_response,
                            variety_ratio, variety_ratios)
from uavirs.scenario import ChannelParams

CH = ChannelParams(rho0=1e-3, sigma2=1e-11)
LOS = ChannelParams(rho0=1e-3, sigma2=1e-11, k1=math.inf, k2=math.inf)
U = np.array([0.0, 250.0, 20.0])

coord = st.floats(-300, 300)
point = st.tuples(coord, coord, st.floats(30, 120)).map(np.array)
ground = st.tuples(coord, coord, st.just(0.0)).map(np.array)


def test_direction_cosine_examples():
    assert direction_cosine((0, 0, 0), (3, 0, 4)) == pytest.approx(0.6)
    assert direction_cosine((1, 2, 3), (1, 7, 9)) == 0.0
    assert direction_cosine((-5, 0, 0), (0, 0, 0)) == pytest.approx(1.0)


@given(point, ground)
def test_direction_cosine_bounded(a, b):
    if np.linalg.norm(a - b) > 0:
        assert -1.0 <= direction_cosine(a, b) <= 1.0


def test_ula_examples():
    assert np.allclose(ula_response(1, 0.5, 0.3), [1])
    assert np.allclose(ula_response(4, 0.5, 1.0), [1, -1, 1, -1])
    assert np.allclose(ula_response(3, 0.5, 0.0), [1, 1, 1])


@given(st.integers(1, 50), st.floats(-1, 1))
def test_ula_unit_modulus(n, c):
    assert np.allclose(np.abs(ula_response(n, 0.5, c)), 1.0)


def test_expected_gain_without_irs():
    q, w = np.array([0.0, 0.0, 100.0]), np.zeros(3)
    eta = expected_gain(q, w, U, np.zeros(0), CH)
    assert eta == pytest.approx(10 ** -7.4, rel=1e-12)
    assert eta == pytest.approx(3.981e-8, rel=1e-3)


def test_pure_los_limit_is_deterministic():
    q, w = np.array([50.0, 100.0, 80.0]), np.array([30.0, 300.0, 0.0])
    th = np.linspace(0, 3, 4)
    lt = link_terms(q, w, U, LOS, 4 * 20)
    assert lt.varpi == 0.0
    refl = np.sum(lt.block_sums(20) * np.exp(1j * th))
    assert expected_gain(q, w, U, th, LOS, 20) == pytest.approx(abs(lt.h_hat + refl) ** 2, rel=1e-14)
    draws = sample_gains(q, w, U, th, LOS, 20, 5, np.random.default_rng(0))
    assert np.allclose(draws, draws[0], rtol=1e-6)


@given(point, ground, st.integers(1, 4), st.sampled_from([1, 5, 20]), st.integers(0, 2 ** 31))
def test_quadratic_form_identity(q, w, m, nbar, seed):
    if np.linalg.norm(q - w) < 1 or np.linalg.norm(w - U) < 1 or np.linalg.norm(q - U) < 1:
        return
    th = np.random.default_rng(seed).uniform(0, 2 * np.pi, m)
    H, varpi = gain_quadratic_form(q, w, U, CH, m, nbar)
    v = phase_vector(th)
    quad = float(np.real(np.conj(v) @ H @ v)) + varpi
    assert quad == pytest.approx(expected_gain(q, w, U, th, CH, nbar), rel=1e-12)
    assert np.allclose(H, H.conj().T)
    assert np.linalg.eigvalsh(H)[0] >= -1e-12 * np.trace(H).real


def test_smallest_quadratic_form_is_rank_one():
    q, w = np.array([10.0, 20.0, 60.0]), np.array([40.0, 260.0, 0.0])
    H, _ = gain_quadratic_form(q, w, U, CH, 1, 1)
    assert H.shape == (2, 2)
    ev = np.linalg.eigvalsh(H)
    assert ev[0] <= 1e-12 * ev[1]
    lt = link_terms(q, w, U, CH, 1)
    h = np.concatenate([lt.block_sums(1), [lt.h_hat]])
    assert np.trace(H).real == pytest.approx(np.linalg.norm(h) ** 2, rel=1e-12)


def test_sampling_deterministic_and_nonnegative():
    q, w = np.array([10.0, 20.0, 60.0]), np.array([40.0, 260.0, 0.0])
    th = np.zeros(2)
    a = sample_effective_gain(q, w, U, th, CH, 20, 17)
    b = sample_effective_gain(q, w, U, th, CH, 20, 17)
    assert a == b and a >= 0


def test_variety_ratio_examples():
    q, w = np.array([0.0, 0.0, 100.0]), np.zeros(3)
    e = direct_gain(q, w, CH)
    assert variety_ratio(expected_gain(q, w, U, np.zeros(0), CH), q, w, CH) == pytest.approx(0.0, abs=1e-12)
    assert variety_ratio(2 * e, q, w, CH) == pytest.approx(1.0)


def test_network_tables_match_pointwise(ref):
    Q = np.array([[100.0, 100.0, 70.0], [60.0, 350.0, 90.0]])
    th = np.linspace(0, 6, ref.M)
    tab = network_gains(ref, Q, th)
    W = np.vstack([ref.users(0), ref.users(1)])
    for j in range(2):
        for u in range(6):
            assert tab.eta[j, u] == pytest.approx(expected_gain(Q[j], W[u], ref.u, th, ref.channel, 20), rel=1e-12)
    z = variety_ratios(ref, Q, th)
    assert z.shape == (2, 6)
    assert z[1, 4] == pytest.approx(variety_ratio(tab.eta[1, 4], Q[1], W[4], ref.channel), rel=1e-10)
