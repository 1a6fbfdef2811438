"""Independent checks: Monte Carlo estimators, bound probes and grid baselines.

Monte Carlo sampling is chunked with a fixed chunk size and per-chunk seeds
spawned from the user seed, so an estimate depends only on (seed, n) and not on
how the chunks are scheduled.  Chunk moments are merged with the parallel
(Chan) update.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import _cn, _los_share, direction_cosine, expand_phases, flat_users, ula_response, _dist
from .rates import link_coefficients, order_from_ranking
from .scenario import ChannelParams, Scenario
from .sca import surrogates as sg

CHUNK = 50_000
BLOCK = 2048  # rows per reflected-path block inside a chunk


@dataclass(frozen=True)
class McEstimate:
    mean: float
    se: float
    n: int
    seed: int

    def within(self, value: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - value) <= n_se * self.se

    def rel_error(self, value: float) -> float:
        return abs(self.mean - value) / abs(value) if value != 0 else abs(self.mean)


@dataclass(frozen=True)
class GainEstimate:
    """Total gain estimate plus the LoS, direct NLoS and reflected NLoS terms."""
    total: McEstimate
    terms: tuple


class _Moments:
    """Streaming mean / variance with an order-independent merge."""

    def __init__(self, width: int = 1):
        self.n = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, float))   # (width, n)
        nb = x.shape[1]
        if nb == 0:
            return
        mb = x.mean(axis=1)
        m2b = ((x - mb[:, None]) ** 2).sum(axis=1)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + m2b + delta ** 2 * self.n * nb / n
        self.n = n

    def estimates(self, seed: int) -> list[McEstimate]:
        var = self.m2 / (self.n - 1) if self.n > 1 else np.zeros_like(self.m2)
        se = np.sqrt(np.maximum(var, 0.0) / self.n)
        return [McEstimate(float(m), float(s), self.n, seed) for m, s in zip(self.mean, se)]


def _chunks(n: int, seed: int):
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    for size, ss in zip(sizes, children):
        yield size, np.random.Generator(np.random.SFC64(ss))


# -- gains -------------------------------------------------------------------------

def _link_draws(Q, w, u, theta, params: ChannelParams, subsurface_size: int, n: int,
                rng: np.random.Generator):
    """Joint draws of one user's channels from every UAV in ``Q``.

    The IRS->user NLoS vector is shared by all UAVs (it is one physical
    channel); the direct NLoS terms are independent per UAV.  Returns the LoS
    amplitudes ``(K,)`` and the NLoS parts ``x2, x3`` of shape ``(K, n)``.
    """
    Q = np.atleast_2d(np.asarray(Q, float))
    w = np.asarray(w, float)
    theta = np.asarray(theta, float)
    K = len(Q)
    rho0 = params.rho0
    k1 = _los_share(params.k1, rho0)
    k2 = _los_share(params.k2, rho0)
    n_el = theta.size * subsurface_size
    los = np.zeros(K, complex)
    x2 = np.zeros((K, n), complex)
    x3 = np.zeros((K, n), complex)
    for j in range(K):
        d = _dist(Q[j], w)
        los[j] = np.sqrt(k1 / d ** params.beta1)
        s_dir = np.sqrt((rho0 - k1) / d ** params.beta1)
        if s_dir > 0:
            x2[j] = s_dir * _cn(rng, n)
    if n_el:
        d_uw = _dist(u, w)
        r_bar = ula_response(n_el, params.spacing_ratio, direction_cosine(u, w))
        a = np.zeros((n_el, K), complex)
        for j in range(K):
            d_qu = _dist(Q[j], u)
            g = np.sqrt(rho0 / d_qu ** 2) * ula_response(n_el, params.spacing_ratio, direction_cosine(Q[j], u))
            a[:, j] = expand_phases(theta, subsurface_size) * g
            los[j] += np.sqrt(k2 / d_uw ** params.beta2) * np.sum(np.conj(r_bar) * a[:, j])
        s_ref = np.sqrt((rho0 - k2) / d_uw ** params.beta2)
        if s_ref > 0:
            # conj(r) . a with r = (x + jy)/sqrt(2), using real products only,
            # in cache-sized row blocks
            ar = a.real.astype(np.float32)
            ai = a.imag.astype(np.float32)
            re = np.empty((n, K), np.float32)
            im = np.empty((n, K), np.float32)
            for start in range(0, n, BLOCK):
                stop = min(n, start + BLOCK)
                xr, yr = _normal_pair(rng, (stop - start, n_el))
                re[start:stop] = xr @ ar + yr @ ai
                im[start:stop] = xr @ ai - yr @ ar
            x3 = (s_ref * 0.7071067811865476) * (re.T.astype(float) + 1j * im.T.astype(float))
    return los, x2, x3


def _normal_pair(rng: np.random.Generator, shape):
    """Two independent float32 standard normal arrays (Box-Muller, in place).

    Uniforms in (0, 1] cap |x| at about 5.8; the effect on second moments is
    below 1e-7 relative.
    """
    r = rng.random(shape, dtype=np.float32)
    ph = rng.random(shape, dtype=np.float32)
    np.subtract(np.float32(1.0), r, out=r)
    np.log(r, out=r)
    r *= np.float32(-2.0)
    np.sqrt(r, out=r)
    ph *= np.float32(2.0 * np.pi)
    x = np.cos(ph)
    np.sin(ph, out=ph)
    x *= r
    ph *= r
    return x, ph


def mc_expected_gain(q, w, u, theta, params: ChannelParams, subsurface_size: int = 1,
                     n_samples: int = 100_000, seed: int = 0) -> GainEstimate:
    """Sample mean of the effective gain and of its three independent terms."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    mom = _Moments(4)
    for size, rng in _chunks(n_samples, seed):
        los, x2, x3 = _link_draws(q, w, u, theta, params, subsurface_size, size, rng)
        c = np.abs(los[0] + x2[0] + x3[0]) ** 2
        mom.add(np.vstack([c, np.full(size, abs(los[0]) ** 2), np.abs(x2[0]) ** 2, np.abs(x3[0]) ** 2]))
    est = mom.estimates(seed)
    return GainEstimate(est[0], tuple(est[1:]))


# -- rates ---------------------------------------------------------------------------

def mc_expected_rate(state, scenario: Scenario, n_samples: int = 100_000, seed: int = 0,
                     scheme: str = "noma") -> list[McEstimate]:
    """Per-user (flat order) sample mean of the exact random rate."""
    sc = scenario
    sizes = sc.group_sizes
    users = flat_users(sc)
    theta = np.asarray(state.theta, float)[: sc.M] if sc.irs_enabled else np.zeros(0)
    out = []
    flat = 0
    for k, m in enumerate(sizes):
        for i in range(m):
            c = link_coefficients(scheme, k, i, state.P, state.A, sc.channel.sigma2, sizes, sc.p_max)
            mom = _Moments(1)
            user_seed = int(np.random.SeedSequence([seed, flat]).generate_state(1)[0])
            if c.own == 0.0:
                out.append(McEstimate(0.0, 0.0, n_samples, seed))
                flat += 1
                continue
            for size, rng in _chunks(n_samples, user_seed):
                los, x2, x3 = _link_draws(state.Q, users[flat], sc.u, theta, sc.channel,
                                          sc.subsurface_size, size, rng)
                g = np.abs(los[:, None] + x2 + x3) ** 2        # (K, size)
                interf = c.total @ g + c.noise
                r = c.weight * np.log2(1.0 + c.own * g[k] / (c.intra * g[k] + interf))
                mom.add(r)
            out.append(mom.estimates(seed)[0])
            flat += 1
    return out


# -- bound probes --------------------------------------------------------------------

@dataclass
class ProbeReport:
    """Margins are signed so that a valid bound has margin >= 0."""
    probe: str
    n_points: int
    worst_margin: float
    expansion_margin: float
    violations: int
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and abs(self.expansion_margin) <= 1e-8

    def line(self) -> str:
        return (f"{self.probe}: n={self.n_points} worst={self.worst_margin:.3e} "
                f"at_expansion={self.expansion_margin:.3e} violations={self.violations} "
                f"{'PASS' if self.passed else 'FAIL'}")


PROBES = ("29", "30a", "30b", "30c", "30d", "30e", "30f", "32", "34", "35", "43", "44", "48")


def _rel(margin, scale):
    return margin / max(1.0, abs(scale))


def _probe_points(pid: str, rng: np.random.Generator, n: int, point):
    """Return (expansion point, list of sample points, margin(x, x0) callable)."""
    beta = 2.2
    if pid == "29":
        # -log2(1 + s/W) <= -(c0 + c1 W) and a - a^2 <= c0 + c1 a, summed
        s = point.get("s", rng.uniform(0.1, 10.0)) if point else rng.uniform(0.1, 10.0)
        x0 = np.array(point["x"]) if point and "x" in point else np.array([rng.uniform(0.05, 5.0), rng.uniform(0, 1)])
        xs = [np.array([rng.uniform(1e-3, 20.0), rng.uniform(0, 1)]) for _ in range(n)]

        def margin(x, x0):
            c0, c1 = sg.rate_in_w(s, x0[0])
            b0, b1 = sg.binary_penalty(x0[1])
            true = -np.log2(1 + s / x[0]) + (x[1] - x[1] ** 2)
            bound = -(c0 + c1 * x[0]) + (b0 + b1 * x[1])
            return _rel(bound - true, true)
        return x0, xs, margin
    if pid in ("30a", "30c", "30e"):
        # ||a||^2 >= -||a0||^2 + 2 a0.a  (a = q_k - q_j, q_j - w or q_k - u)
        x0 = np.array(point["x"]) if point and "x" in point else rng.uniform(-300, 300, 3)
        xs = [x0 + rng.uniform(-50, 50, 3) * rng.uniform(0, 4) for _ in range(n)]

        def margin(x, x0):
            c0, c1 = sg.sq_norm(x0)
            return _rel(float(x @ x) - (c0 + c1 @ x), x @ x)
        return x0, xs, margin
    if pid in ("30b", "30d", "30f"):
        # x^2 >= -x0^2 + 2 x0 x  (u, uu, U)
        x0 = float(point["x"]) if point and "x" in point else rng.uniform(0.1, 300.0)
        xs = [rng.uniform(0.0, 3 * x0) for _ in range(n)]

        def margin(x, x0):
            c0, c1 = sg.square(x0)
            return _rel(x * x - (c0 + c1 * x), x * x)
        return x0, xs, margin
    if pid == "32":
        # a*pi <= (a+pi)^2/4 + c0 + c1 (a - pi)
        x0 = np.array(point["x"]) if point and "x" in point else np.array([rng.uniform(0, 1), rng.uniform(1, 1e5)])
        xs = [np.array([rng.uniform(0, 1), rng.uniform(0, 2e5)]) for _ in range(n)]

        def margin(x, x0):
            ub = sg.product_ub_value(x[0], x[1], x0[0], x0[1])
            return _rel(ub - x[0] * x[1], x[0] * x[1])
        return x0, xs, margin
    if pid in ("34", "35"):
        sign = point.get("sign", 1.0) if point else (1.0 if rng.uniform() < 0.5 else -1.0)
        rho = point.get("rho", 1.0) if point else 1.0
        b = point.get("b", rng.uniform(0.01, 2.0)) if point else rng.uniform(0.01, 2.0)
        c = sign * (point.get("c", rng.uniform(0.0, 2.0)) if point else rng.uniform(0.0, 2.0))
        x0 = np.array(point["x"]) if point and "x" in point else rng.uniform(0.3, 3.0, 2)
        xs = [rng.uniform(0.1, 6.0, 2) for _ in range(n)]

        def margin(x, x0):
            true = sg.gain_model(beta, rho, b, c, x[0], x[1])
            if pid == "34":
                return _rel(true - sg.gain_lower(beta, rho, b, c, x[0], x[1], x0[0], x0[1]), true)
            return _rel(sg.gain_upper(beta, rho, b, c, x[0], x[1], x0[0], x0[1]) - true, true)
        return x0, xs, margin
    if pid in ("43", "48"):
        # log2(lin.x + const) <= c0 + grad.x on x >= 0 (x = Tr(H V) values or powers)
        m = int(point.get("m", 4)) if point else 4
        lin = np.array(point["lin"]) if point and "lin" in point else rng.uniform(0, 5, m)
        const = float(point.get("const", 1.0)) if point else 1.0
        x0 = np.array(point["x"]) if point and "x" in point else rng.uniform(0, 2, len(lin))
        if pid == "43":
            xs = [_trace_values(rng, lin.size) for _ in range(n)]
        else:
            xs = [rng.uniform(0, 3, lin.size) * rng.uniform(0, 1) for _ in range(n)]

        def margin(x, x0):
            c0, grad = sg.log_affine_upper(lin, const, x0)
            true = np.log2(lin @ x + const)
            return _rel(c0 + grad @ x - true, true)
        return x0, xs, margin
    if pid == "44":
        # ||V||_2 >= u^H V u with u the principal eigenvector of V0
        dim = int(point.get("dim", 4)) if point else 4
        V0 = np.array(point["V0"]) if point and "V0" in point else _random_psd(rng, dim)
        xs = [_random_psd(rng, V0.shape[0]) for _ in range(n)]

        def margin(V, V0):
            u, _ = sg.spectral_lower(V0)
            true = float(np.linalg.eigvalsh(V)[-1])
            return _rel(true - float(np.real(np.conj(u) @ V @ u)), true)
        return V0, xs, margin
    raise ValueError(f"unknown surrogate id {pid!r}; expected one of {PROBES}")


def _random_psd(rng, dim):
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    V = G @ G.conj().T
    d = np.sqrt(np.real(np.diag(V)))
    return V / np.outer(d, d)


def _trace_values(rng, m):
    """``Tr(H_j V)`` for random rank-one PSD ``H_j`` and a random unit-diagonal PSD ``V``."""
    dim = 4
    V = _random_psd(rng, dim)
    out = []
    for _ in range(m):
        h = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        out.append(float(np.real(np.conj(h) @ V @ h)))
    return np.array(out)


def bound_probe(pid: str, point: dict | None = None, n_points: int = 100, seed: int = 0,
                tol: float = 1e-12) -> ProbeReport:
    """Check one Taylor surrogate on ``n_points`` random points of its validity region.

    ``point`` optionally fixes the expansion point (``{"x": ...}``) and the
    surrogate's coefficients; otherwise both are drawn from ``seed``.
    """
    pid = str(pid)
    rng = np.random.default_rng([seed, PROBES.index(pid) if pid in PROBES else 99])
    x0, xs, margin = _probe_points(pid, rng, n_points, point)
    margins = np.array([margin(x, x0) for x in xs])
    at0 = float(margin(x0, x0))
    return ProbeReport(pid, n_points, float(margins.min()) if margins.size else 0.0, at0,
                       int(np.sum(margins < -tol)), tol)


def midpoint_margin(fid: str, p1, p2, b, beta: float = 2.2) -> float:
    """``(f(p1) + f(p2))/2 - f((p1+p2)/2)`` relative to the endpoint average."""
    def f(p):
        x, y = p
        if fid == "g1":
            return b[0] * x ** -beta + b[1] * y ** -2.0
        if fid == "g2":
            return b[2] * x ** (-beta / 2) / y
        raise ValueError(f"unknown function id {fid!r}; expected 'g1' or 'g2'")
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    avg = 0.5 * (f(p1) + f(p2))
    return (avg - f(0.5 * (p1 + p2))) / max(abs(avg), 1e-300)


def convexity_probe(fid: str, n_trials: int = 10_000, seed: int = 0, beta: float = 2.2,
                    tol: float = 1e-10) -> ProbeReport:
    """Midpoint convexity of g1 = b1 x^-beta + b2 y^-2 or g2 = b3 x^-beta/2 / y."""
    rng = np.random.default_rng(seed)
    m = np.empty(n_trials)
    for t in range(n_trials):
        b = rng.uniform(0.01, 10.0, 3)
        p1 = np.exp(rng.uniform(-3, 3, 2))
        p2 = np.exp(rng.uniform(-3, 3, 2))
        m[t] = midpoint_margin(fid, p1, p2, b, beta)
    p = np.array([1.0, 2.0])
    return ProbeReport(fid, n_trials, float(m.min()), midpoint_margin(fid, p, p, [1, 1, 1], beta),
                       int(np.sum(m < -tol)), tol)


# -- grid baseline ---------------------------------------------------------------------

@dataclass
class GridResult:
    value: float
    Q: np.ndarray
    P: list
    A: list
    evaluations: int
    slack: float


def _power_grid(scheme, sizes, p_max, levels):
    """Coarse per-group power candidates."""
    out = []
    for k, m in enumerate(sizes):
        if scheme == "noma":
            cand = [np.array(c, float) * p_max[k] / levels
                    for c in itertools.product(range(levels + 1), repeat=m) if sum(c) <= levels]
        elif scheme == "oma":
            cand = [np.array([c * p_max[k] / levels]) for c in range(levels + 1)]
        else:
            cand = [np.array([p_max[k]])]
        out.append(cand)
    return out


def _rates_on_grid(scheme, eta, P, A, sigma2, sizes, p_max):
    """Sum rate for gain arrays ``eta`` of shape (n, K, U)."""
    total = np.zeros(eta.shape[0])
    u = 0
    for k, m in enumerate(sizes):
        for i in range(m):
            c = link_coefficients(scheme, k, i, P, A, sigma2, sizes, p_max)
            if c.own > 0:
                ek = eta[:, k, u]
                interf = eta[:, :, u] @ c.total + c.noise
                total += c.weight * np.log2(1.0 + c.own * ek / (c.intra * ek + interf))
            u += 1
    return total


def grid_search_placement(scenario: Scenario, resolution: float = 10.0, scheme: str = "noma",
                          power_levels: int | None = None, theta=None, z_levels: int = 5,
                          budget: float = 1e7) -> GridResult:
    """Exhaustive search over UAV positions, decoding orders and coarse powers.

    Horizontal candidates cover each group's area at ``resolution`` metres and
    heights take ``z_levels`` values in [z_min, z_max].  NOMA orders are every
    permutation per group (up to four users); a permutation only counts where it
    matches the distance order and the powers respect it.  Without
    ``power_levels`` the powers are fixed at the equal split (NOMA) or P_max.
    """
    sc = scenario
    sizes = sc.group_sizes
    if scheme == "noma" and max(sizes) > 4:
        raise ValueError("order enumeration is limited to groups of at most four users")
    theta = np.zeros(sc.M) if theta is None else np.asarray(theta, float)
    cells = []
    for g in sc.groups:
        lo, hi = g.sampling_box()
        xs = np.arange(lo[0], hi[0] + 1e-9, resolution)
        ys = np.arange(lo[1], hi[1] + 1e-9, resolution)
        zs = np.linspace(sc.z_min, sc.z_max, z_levels) if sc.z_max > sc.z_min else np.array([sc.z_min])
        cells.append(np.array(list(itertools.product(xs, ys, zs))))
    n_pos = int(np.prod([len(c) for c in cells]))
    if power_levels:
        pgrid = _power_grid(scheme, sizes, sc.p_max, power_levels)
    elif scheme == "noma":
        pgrid = [[np.full(m, sc.p_max[k] / m)] for k, m in enumerate(sizes)]
    else:
        pgrid = [[np.array([sc.p_max[k]])] for k in range(sc.K)]
    perms = [list(itertools.permutations(range(m))) if scheme == "noma" else [None] for m in sizes]
    n_eval = n_pos * int(np.prod([len(p) for p in perms])) * int(np.prod([len(p) for p in pgrid]))
    if n_eval > budget:
        raise ValueError(f"grid budget exceeded: {n_eval} evaluations > {budget:.0f}")

    idx = np.array(list(itertools.product(*[range(len(c)) for c in cells])))
    Qs = np.stack([cells[k][idx[:, k]] for k in range(sc.K)], axis=1)     # (n, K, 3)
    eta = _grid_gains(sc, Qs, theta)
    users = [sc.users(k) for k in range(sc.K)]
    best = (-np.inf, None, None, None)
    for perm_combo in itertools.product(*perms):
        if scheme == "noma":
            A = [order_from_ranking(np.argsort(perm)) for perm in perm_combo]
            # distance order must agree (ties count as agreement)
            ok = np.ones(len(Qs), bool)
            for k, perm in enumerate(perm_combo):
                d = np.linalg.norm(Qs[:, k, None, :] - users[k][None], axis=2)
                ok &= np.all(np.diff(d[:, list(perm)], axis=1) >= -1e-9, axis=1)
            if not ok.any():
                continue
        else:
            A, ok = None, np.ones(len(Qs), bool)
        for P in itertools.product(*pgrid):
            P = [p.copy() for p in P]
            if scheme == "noma" and not _power_order_ok(P, A):
                continue
            val = _rates_on_grid(scheme, eta, P, A, sc.channel.sigma2, sizes, sc.p_max)
            val = np.where(ok, val, -np.inf)
            j = int(np.argmax(val))
            if val[j] > best[0]:
                best = (float(val[j]), Qs[j].copy(), P, A)
    value, Q, P, A = best
    slack = _grid_slack(sc, scheme, Q, P, A, theta, resolution, value, cells)
    return GridResult(value, Q, P, A, n_eval, slack)


def _power_order_ok(P, A):
    for p, a in zip(P, A):
        m = len(p)
        for t in range(m):
            for i in range(m):
                if t != i and a[t, i] == 1 and p[i] < p[t] - 1e-15:
                    return False
    return True


def _grid_gains(sc: Scenario, Qs: np.ndarray, theta) -> np.ndarray:
    """Expected gains ``(n, K, U)`` for many placements."""
    from .channel import network_quadratic_forms
    W = flat_users(sc)
    ch = sc.channel
    if not sc.irs_enabled:
        d = np.linalg.norm(Qs[:, :, None, :] - W[None, None], axis=3)
        return ch.rho0 / d ** ch.beta1
    out = np.empty((len(Qs), sc.K, len(W)))
    for n, Q in enumerate(Qs):
        out[n] = network_quadratic_forms(sc, Q).gains(theta)
    return out


def _grid_slack(sc, scheme, Q, P, A, theta, resolution, value, cells):
    """Largest objective change between the grid optimum and its grid neighbours."""
    if Q is None:
        return float("nan")
    steps = []
    for k in range(sc.K):
        zs = np.unique(cells[k][:, 2])
        dz = zs[1] - zs[0] if len(zs) > 1 else 0.0
        for axis, h in ((0, resolution), (1, resolution), (2, dz)):
            for s in (-1, 1):
                if h == 0:
                    continue
                Qn = Q.copy()
                Qn[k, axis] += s * h
                steps.append(Qn)
    vals = _rates_on_grid(scheme, _grid_gains(sc, np.array(steps), theta), P, A,
                          sc.channel.sigma2, sc.group_sizes, sc.p_max)
    return float(np.max(np.abs(vals - value)))
