"""Expected NOMA / OMA / IF rates, decoding orders and DC rate splits.

Users are addressed either as ``(k, i)`` or by a flat index ``u`` running over
all groups in order.  Decoding orders are stored per group as a square array
``alpha`` with ``alpha[t, i] = 1`` when user ``t`` is decoded after user ``i``
(i.e. ``t`` is the stronger user, so ``t`` interferes with ``i``).  The diagonal
is fixed to 1, matching the convention used by the DC splits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SCHEMES = ("noma", "oma", "if")
LOG2E = 1.0 / np.log(2.0)


class RateError(ValueError):
    pass


def check_scheme(scheme: str) -> str:
    s = scheme.lower()
    if s not in SCHEMES:
        raise RateError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return s


# -- decoding orders -----------------------------------------------------------

def distance_decoding_order(q_k, users) -> np.ndarray:
    """alpha[t, i] = 1 iff user t is strictly closer than i (ties: lower index)."""
    d = np.linalg.norm(np.asarray(users, float) - np.asarray(q_k, float), axis=1)
    return order_from_ranking(d)


def order_from_ranking(score) -> np.ndarray:
    """Order matrix from a per-user score where smaller means stronger."""
    score = np.asarray(score, float)
    m = score.size
    rank = sorted(range(m), key=lambda t: (score[t], t))
    pos = np.empty(m, int)
    pos[rank] = np.arange(m)
    alpha = (pos[:, None] < pos[None, :]).astype(float)
    np.fill_diagonal(alpha, 1.0)
    return alpha


def is_valid_order(alpha, tol: float = 0.0) -> bool:
    """Binary, pair sums one, and a strict total order."""
    a = np.asarray(alpha, float)
    m = a.shape[0]
    off = ~np.eye(m, dtype=bool)
    if m == 1:
        return True
    if np.any(np.minimum(np.abs(a[off]), np.abs(1 - a[off])) > tol):
        return False
    b = np.round(a)
    if np.any(np.abs((b + b.T)[off] - 1) > 0):
        return False
    # strongest-first ranking by number of users each one beats
    wins = (b * off).sum(axis=1)
    return sorted(wins.tolist()) == list(range(m))


def strength_rank(alpha) -> np.ndarray:
    """Users sorted strongest first."""
    a = np.asarray(alpha, float)
    off = ~np.eye(a.shape[0], dtype=bool)
    return np.argsort(-(a * off).sum(axis=1), kind="stable")


def round_order(alpha) -> np.ndarray:
    """Round relaxed indicators to a valid total order (row-sum sorting)."""
    a = np.asarray(alpha, float)
    off = ~np.eye(a.shape[0], dtype=bool)
    score = -(np.where(a >= 0.5, 1.0, 0.0) * off).sum(axis=1) - 1e-6 * (a * off).sum(axis=1)
    return order_from_ranking(score)


# -- rate coefficients ----------------------------------------------------------

@dataclass(frozen=True)
class LinkCoefficients:
    """Per-user pieces of ``w log2(1 + own / (intra + (sum_j eta_j T_j + noise)/eta_k))``."""
    own: float
    intra: float
    total: np.ndarray   # T_j, transmit power of every UAV (zero for own group and for IF)
    noise: float
    weight: float


def group_power_total(P: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([float(np.sum(p)) for p in P])


def link_coefficients(scheme: str, k: int, i: int, P, A, sigma2: float, sizes: Sequence[int],
                      p_max: Sequence[float]) -> LinkCoefficients:
    scheme = check_scheme(scheme)
    K = len(sizes)
    if scheme == "if":
        return LinkCoefficients(float(p_max[k]), 0.0, np.zeros(K), sigma2 / K, 1.0 / (K * sizes[k]))
    tot = group_power_total(P)
    tot[k] = 0.0
    if scheme == "oma":
        return LinkCoefficients(float(P[k][0]), 0.0, tot, sigma2, 1.0 / sizes[k])
    a = np.asarray(A[k], float)
    p = np.asarray(P[k], float)
    mask = np.ones(sizes[k], bool)
    mask[i] = False
    intra = float(np.sum(a[mask, i] * p[mask]))
    return LinkCoefficients(float(p[i]), intra, tot, sigma2, 1.0)


def _rate(c: LinkCoefficients, eta_col: np.ndarray, k: int) -> float:
    ek = eta_col[k]
    if c.own == 0.0:
        return 0.0
    if not ek > 0:
        raise RateError("zero desired channel gain")
    interf = float(np.dot(eta_col, c.total)) + c.noise
    return c.weight * float(np.log2(1.0 + c.own / (c.intra + interf / ek)))


def expected_noma_rate(k: int, i: int, eta, P, A, sigma2: float) -> float:
    """Expected NOMA rate of user (k, i) from the gain table ``eta``.

    ``eta`` is an :class:`~uavirs.channel.ExpectedGainTable` or a ``(K, U)``
    array indexed by flat user; ``A`` may hold relaxed (fractional) values.
    """
    arr, offsets = _eta_arrays(eta, [len(p) for p in P])
    sizes = [len(p) for p in P]
    c = link_coefficients("noma", k, i, P, A, sigma2, sizes, [0.0] * len(sizes))
    return _rate(c, arr[:, offsets[k] + i], k)


def _eta_arrays(eta, sizes):
    if hasattr(eta, "eta"):
        return np.asarray(eta.eta), eta.offsets
    arr = np.asarray(eta, float)
    offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    return arr, offsets


def user_rates(scheme: str, eta, P, A, sigma2: float, sizes, p_max) -> np.ndarray:
    """Per-user expected rates (flat order) for any scheme."""
    arr, offsets = _eta_arrays(eta, sizes)
    out = []
    for k, m in enumerate(sizes):
        for i in range(m):
            c = link_coefficients(scheme, k, i, P, A, sigma2, sizes, p_max)
            out.append(_rate(c, arr[:, offsets[k] + i], k))
    return np.array(out)


def benchmark_rates(scheme: str, eta, p_or_pmax, scenario) -> np.ndarray:
    """Per-user OMA (per-UAV powers ``p_or_pmax``) or IF (uses P_max) rates."""
    scheme = check_scheme(scheme)
    if scheme == "noma":
        raise RateError("benchmark_rates takes 'oma' or 'if'")
    sizes = scenario.group_sizes
    P = [np.array([float(p)]) for p in np.broadcast_to(np.asarray(p_or_pmax, float), (scenario.K,))]
    return user_rates(scheme, eta, P, None, scenario.channel.sigma2, sizes, scenario.p_max)


def sum_rate(state, scenario, scheme: str = "noma") -> float:
    """Expected sum rate of a :class:`~uavirs.bcd.DecisionState`."""
    from .channel import network_gains
    eta = network_gains(scenario, state.Q, state.theta)
    return float(np.sum(user_rates(scheme, eta, state.P, state.A, scenario.channel.sigma2,
                                   scenario.group_sizes, scenario.p_max)))


# -- difference-of-concave splits -----------------------------------------------

@dataclass(frozen=True)
class DcSplit:
    """``weight * (log2(f_lin.x + f_const) - log2(g_lin.x + g_const))``.

    For the phase split ``x[j] = Tr(H^j V)``; for the power split ``x`` is the
    vector of power variables.
    """
    f_lin: np.ndarray
    f_const: float
    g_lin: np.ndarray
    g_const: float
    weight: float = 1.0

    def f(self, x) -> float:
        return float(np.log2(np.dot(self.f_lin, x) + self.f_const))

    def g(self, x) -> float:
        return float(np.log2(np.dot(self.g_lin, x) + self.g_const))

    def value(self, x) -> float:
        return self.weight * (self.f(x) - self.g(x))

    def g_gradient(self, x) -> np.ndarray:
        return self.g_lin * LOG2E / (np.dot(self.g_lin, x) + self.g_const)


def dc_split_theta(k: int, i: int, quad, P, A, sigma2: float, *, scheme: str = "noma",
                   sizes=None, p_max=None, offsets=None) -> DcSplit:
    """Split of user (k, i)'s rate over the lifted phase matrix V.

    ``quad`` is a :class:`~uavirs.channel.QuadraticGainForm`; coefficients act on
    ``x[j] = Tr(H^j_{k,i} V)``.
    """
    sizes = sizes or [len(p) for p in P]
    offsets = offsets or tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    p_max = p_max if p_max is not None else [0.0] * len(sizes)
    c = link_coefficients(scheme, k, i, P, A, sigma2, sizes, p_max)
    varpi = quad.varpi[:, offsets[k] + i]
    g_lin = c.total.copy()
    g_lin[k] = c.intra
    f_lin = g_lin.copy()
    f_lin[k] = c.intra + c.own
    return DcSplit(f_lin, float(f_lin @ varpi + c.noise), g_lin, float(g_lin @ varpi + c.noise), c.weight)


def power_layout(scheme: str, sizes) -> list[np.ndarray]:
    """Flat power-variable indices per group (one per user for NOMA, one per UAV for OMA)."""
    if check_scheme(scheme) == "noma":
        offs = np.concatenate([[0], np.cumsum(sizes)])
        return [np.arange(offs[k], offs[k + 1]) for k in range(len(sizes))]
    return [np.array([k]) for k in range(len(sizes))]


def dc_split_power(k: int, i: int, eta, A, sigma2: float, *, scheme: str = "noma", sizes=None) -> DcSplit:
    """Split of user (k, i)'s rate over the power variables (fixed gains)."""
    scheme = check_scheme(scheme)
    if scheme == "if":
        raise RateError("the IF scheme has no power variables")
    if sizes is None:
        if not hasattr(eta, "offsets"):
            raise RateError("group sizes are required with a bare gain array")
        ends = list(eta.offsets[1:]) + [eta.eta.shape[1]]
        sizes = [e - o for o, e in zip(eta.offsets, ends)]
    arr, offsets = _eta_arrays(eta, sizes)
    col = arr[:, offsets[k] + i]
    layout = power_layout(scheme, sizes)
    n = int(sum(len(ix) for ix in layout))
    g_lin = np.zeros(n)
    for j, ix in enumerate(layout):
        if j != k:
            g_lin[ix] = col[j]
    f_lin = g_lin.copy()
    if scheme == "noma":
        a = np.asarray(A[k], float).copy()
        own = layout[k]
        coef = a[:, i].copy()
        coef[i] = 0.0
        g_lin[own] = col[k] * coef
        coef[i] = 1.0
        f_lin[own] = col[k] * coef
        weight = 1.0
    else:
        f_lin[layout[k]] = col[k]
        weight = 1.0 / sizes[k]
    return DcSplit(f_lin, sigma2, g_lin, sigma2, weight)


def flatten_power(scheme: str, P) -> np.ndarray:
    if check_scheme(scheme) == "noma":
        return np.concatenate([np.asarray(p, float) for p in P])
    return np.array([float(p[0]) for p in P])


def unflatten_power(scheme: str, x, sizes) -> list[np.ndarray]:
    return [np.asarray(x, float)[ix].copy() for ix in power_layout(scheme, sizes)]
