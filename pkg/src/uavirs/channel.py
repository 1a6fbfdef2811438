"""LoS array responses, Rician sampling and closed-form expected gains.

Every UAV-user link has a direct Rician path and a reflected path through the
IRS.  The reflected path is the cascade of a pure-LoS UAV->IRS hop and a Rician
IRS->user hop; the IRS elements are grouped into ``M`` sub-surfaces of
``subsurface_size`` adjacent elements that share one phase.

The expected power gain of a link is

    eta = |h_hat + r_hat^H Theta g|^2 + (rho0 - kappa1)/d^beta1 + tau/d_qu^2

which can be written as ``v^H H v + varpi`` with ``v = [exp(j theta); 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelParams, RicianSplits, Scenario, ScenarioError, rician_splits


class GeometryError(ValueError):
    pass


def _dist(a, b) -> float:
    d = float(np.linalg.norm(np.asarray(b, float) - np.asarray(a, float)))
    if d == 0.0:
        raise GeometryError("coincident points")
    return d


def direction_cosine(frm, to) -> float:
    """x-axis direction cosine of the vector from ``frm`` to ``to``."""
    frm = np.asarray(frm, float)
    to = np.asarray(to, float)
    return float((to[0] - frm[0]) / _dist(frm, to))


def ula_response(n: int, spacing_ratio: float, cosine: float) -> np.ndarray:
    m = np.arange(n)
    return np.exp(-2j * np.pi * spacing_ratio * m * cosine)


def _los_share(kf: float, rho0: float) -> float:
    return rho0 if np.isinf(kf) else kf * rho0 / (kf + 1.0)


def expand_phases(theta, subsurface_size: int) -> np.ndarray:
    """Per-element phasors: each sub-surface phase repeated over its elements."""
    return np.repeat(np.exp(1j * np.asarray(theta, float)), subsurface_size)


@dataclass(frozen=True)
class LinkTerms:
    """Deterministic pieces of one UAV-user link."""
    h_hat: float            # LoS direct amplitude sqrt(kappa1/d^beta1)
    cascade: np.ndarray     # per-element conj(r_hat) * g, length N
    varpi: float            # NLoS power (direct + reflected)
    d_direct: float

    def block_sums(self, subsurface_size: int) -> np.ndarray:
        if self.cascade.size == 0:
            return np.zeros(0, complex)
        return self.cascade.reshape(-1, subsurface_size).sum(axis=1)


def link_terms(q, w, u, params: ChannelParams, n_elements: int) -> LinkTerms:
    q = np.asarray(q, float)
    w = np.asarray(w, float)
    u = np.asarray(u, float)
    rho0 = params.rho0
    k1 = _los_share(params.k1, rho0)
    k2 = _los_share(params.k2, rho0)
    d = _dist(q, w)
    h_hat = np.sqrt(k1 / d ** params.beta1)
    varpi = (rho0 - k1) / d ** params.beta1
    if n_elements == 0:
        return LinkTerms(float(h_hat), np.zeros(0, complex), float(varpi), d)
    d_uw = _dist(u, w)
    d_qu = _dist(q, u)
    r_bar = ula_response(n_elements, params.spacing_ratio, direction_cosine(u, w))
    g_bar = ula_response(n_elements, params.spacing_ratio, direction_cosine(q, u))
    r_hat = np.sqrt(k2 / d_uw ** params.beta2) * r_bar
    g = np.sqrt(rho0 / d_qu ** 2) * g_bar
    tau = n_elements * rho0 * (rho0 - k2) / d_uw ** params.beta2
    varpi += tau / d_qu ** 2
    return LinkTerms(float(h_hat), np.conj(r_hat) * g, float(varpi), d)


def expected_gain(q, w, u, theta, params: ChannelParams, subsurface_size: int = 1) -> float:
    """Closed-form expected effective gain of one link at IRS phases ``theta``."""
    theta = np.asarray(theta, float)
    lt = link_terms(q, w, u, params, theta.size * subsurface_size)
    refl = np.sum(lt.cascade * expand_phases(theta, subsurface_size)) if theta.size else 0.0
    return float(abs(lt.h_hat + refl) ** 2 + lt.varpi)


def gain_quadratic_form(q, w, u, params: ChannelParams, m: int, subsurface_size: int):
    """Return ``(H, varpi)`` with ``v^H H v + varpi`` equal to the expected gain."""
    lt = link_terms(q, w, u, params, m * subsurface_size)
    row = np.concatenate([lt.block_sums(subsurface_size), [lt.h_hat]])
    return np.outer(np.conj(row), row), lt.varpi


def phase_vector(theta) -> np.ndarray:
    return np.concatenate([np.exp(1j * np.asarray(theta, float)), [1.0]])


def sample_gains(q, w, u, theta, params: ChannelParams, subsurface_size: int, n: int,
                 rng: np.random.Generator, *, components: bool = False):
    """Draw ``n`` effective power gains |h + r^H Theta g|^2.

    NLoS parts are i.i.d. unit-variance circularly symmetric complex Gaussians,
    one per draw for the direct link and one per element and draw for the
    IRS->user link.  With ``components`` the three zero-mean-split terms
    (LoS, direct NLoS, reflected NLoS) are returned as well.
    """
    theta = np.asarray(theta, float)
    n_el = theta.size * subsurface_size
    q = np.asarray(q, float)
    w = np.asarray(w, float)
    u = np.asarray(u, float)
    rho0 = params.rho0
    k1 = _los_share(params.k1, rho0)
    k2 = _los_share(params.k2, rho0)
    d = _dist(q, w)
    los = np.sqrt(k1 / d ** params.beta1) + 0j
    s_dir = np.sqrt((rho0 - k1) / d ** params.beta1)
    x2 = s_dir * _cn(rng, n) if s_dir > 0 else np.zeros(n, complex)
    x3 = np.zeros(n, complex)
    if n_el:
        d_uw = _dist(u, w)
        d_qu = _dist(q, u)
        r_bar = ula_response(n_el, params.spacing_ratio, direction_cosine(u, w))
        g = np.sqrt(rho0 / d_qu ** 2) * ula_response(n_el, params.spacing_ratio, direction_cosine(q, u))
        a = expand_phases(theta, subsurface_size) * g
        los = los + np.sqrt(k2 / d_uw ** params.beta2) * np.sum(np.conj(r_bar) * a)
        s_ref = np.sqrt((rho0 - k2) / d_uw ** params.beta2)
        if s_ref > 0:
            a = a.astype(np.complex64)
            chunk = max(1, 2_000_000 // n_el)
            for start in range(0, n, chunk):
                stop = min(n, start + chunk)
                r_t = _cn(rng, (stop - start, n_el), np.float32)
                x3[start:stop] = s_ref * (np.conj(r_t) @ a)
    c = np.abs(los + x2 + x3) ** 2
    if components:
        return c, (np.full(n, abs(los) ** 2), np.abs(x2) ** 2, np.abs(x3) ** 2)
    return c


def _cn(rng: np.random.Generator, size, dtype=np.float64) -> np.ndarray:
    re = rng.standard_normal(size, dtype=dtype)
    im = rng.standard_normal(size, dtype=dtype)
    return (re + 1j * im) * 0.7071067811865476


def sample_effective_gain(q, w, u, theta, params: ChannelParams, subsurface_size: int, rng_seed) -> float:
    """One effective gain draw; identical for identical seeds."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return float(sample_gains(q, w, u, theta, params, subsurface_size, 1, rng)[0])


def direct_gain(q, w, params: ChannelParams) -> float:
    return params.rho0 / _dist(q, w) ** params.beta1


def variety_ratio(eta: float, q, w, params: ChannelParams) -> float:
    """Relative gain change due to the IRS versus the direct link alone."""
    e = direct_gain(q, w, params)
    return (eta - e) / e


# -- whole-network tables ----------------------------------------------------

@dataclass(frozen=True)
class QuadraticGainForm:
    """``rows[j, u]`` is the stacked channel row; ``H = rows^H rows``."""
    rows: np.ndarray   # (K, U, M+1) complex
    varpi: np.ndarray  # (K, U)

    def H(self, j: int, u: int) -> np.ndarray:
        r = self.rows[j, u]
        return np.outer(np.conj(r), r)

    def gains(self, theta) -> np.ndarray:
        v = phase_vector(theta)
        return np.abs(self.rows @ v) ** 2 + self.varpi


@dataclass(frozen=True)
class ExpectedGainTable:
    """``eta[j, u]``: gain from UAV j to flat user index u."""
    eta: np.ndarray
    offsets: tuple[int, ...]

    def at(self, j: int, k: int, i: int) -> float:
        return float(self.eta[j, self.offsets[k] + i])


def user_offsets(scenario: Scenario) -> tuple[int, ...]:
    return tuple(int(x) for x in np.concatenate([[0], np.cumsum(scenario.group_sizes)[:-1]]))


def flat_users(scenario: Scenario) -> np.ndarray:
    return np.vstack([g.positions for g in scenario.groups])


def user_groups(scenario: Scenario) -> np.ndarray:
    return np.concatenate([[k] * g.size for k, g in enumerate(scenario.groups)]).astype(int)


def network_quadratic_forms(scenario: Scenario, Q) -> QuadraticGainForm:
    Q = np.asarray(Q, float)
    W = flat_users(scenario)
    M = scenario.M
    rows = np.zeros((scenario.K, len(W), M + 1), complex)
    varpi = np.zeros((scenario.K, len(W)))
    for j in range(scenario.K):
        for u, w in enumerate(W):
            lt = link_terms(Q[j], w, scenario.u, scenario.channel, M * scenario.subsurface_size)
            rows[j, u, :M] = lt.block_sums(scenario.subsurface_size)
            rows[j, u, M] = lt.h_hat
            varpi[j, u] = lt.varpi
    return QuadraticGainForm(rows, varpi)


def network_gains(scenario: Scenario, Q, theta) -> ExpectedGainTable:
    qf = network_quadratic_forms(scenario, Q)
    return ExpectedGainTable(qf.gains(np.asarray(theta, float)[: scenario.M]), user_offsets(scenario))


def check_splits(scenario: Scenario) -> RicianSplits:
    try:
        return rician_splits(scenario.channel, scenario)
    except ScenarioError as exc:
        raise GeometryError(str(exc)) from None


def variety_ratios(scenario: Scenario, Q, theta) -> np.ndarray:
    """``zeta[j, u]`` for every UAV j and flat user u at placement ``Q``."""
    Q = np.asarray(Q, float)
    eta = network_gains(scenario, Q, theta).eta
    W = flat_users(scenario)
    ch = scenario.channel
    d = np.linalg.norm(Q[:, None, :] - W[None], axis=2)
    direct = ch.rho0 / d ** ch.beta1
    return (eta - direct) / direct
