"""Placement and decoding-order block.

Each user's rate is written as ``w log2(1 + s / W)`` with auxiliary variables

* ``du``  >= distance from the serving UAV, ``dl`` <= distance from each
  interfering UAV, ``uu`` >= and ``ll`` <= UAV-IRS distances;
* ``eta_lo`` <= served gain, ``eta_hi`` >= interfering gains, both expressed
  through ``rho x^-beta + X y^-2 + Y x^-beta/2 y^-1`` with the AoA-dependent
  ``X, Y`` frozen at the expansion point;
* ``U^2 >= sum eta_hi T + noise`` and ``W >= intra + U^2 / eta_lo``.

Relaxed decoding indicators carry a linearized binary penalty and are tied
to distances through ``alpha_{t,i} pi_t <= ||q - w_i||^2`` with
``pi_t >= ||q - w_t||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..channel import link_terms
from ..conic import ConicProgram, Lin, lin_sum, solve
from ..rates import distance_decoding_order, is_valid_order, round_order
from . import surrogates as sg
from .common import LENGTH_UNIT, Setting
from .schedule import PenaltySchedule, SubproblemError, Trace


@dataclass
class PlacementAux:
    """Auxiliary variables and frozen coefficients (metres / watts / linear gains)."""
    du: np.ndarray       # (U,)
    dl: np.ndarray       # (K, U), nan on the serving UAV
    uu: np.ndarray       # (K,)
    ll: np.ndarray       # (K,)
    eta_lo: np.ndarray   # (U,)
    eta_hi: np.ndarray   # (K, U), nan on the serving UAV
    U: np.ndarray        # (U,)
    W: np.ndarray        # (U,)
    pi: np.ndarray       # (U,) squared distance to the serving UAV
    X: np.ndarray        # (K, U): B on the serving UAV, D elsewhere
    Y: np.ndarray        # (K, U): C on the serving UAV, E elsewhere


def gain_coefficients(setting: Setting, Q, theta):
    """``X = rho0 |z|^2 + tau`` and ``Y = 2 sqrt(kappa1 rho0) Re z`` for every UAV-user pair.

    ``z = r_hat^H Theta g_bar`` uses the unit-amplitude UAV->IRS response.
    """
    sc = setting.scenario
    ch = sc.channel
    K, U = setting.K, len(setting.users)
    X = np.zeros((K, U))
    Y = np.zeros((K, U))
    if not setting.irs:
        return X, Y
    k1 = ch.rho0 if math.isinf(ch.k1) else ch.k1 * ch.rho0 / (ch.k1 + 1)
    ph = np.exp(1j * np.asarray(theta, float)[: sc.M])
    for j in range(K):
        d_qu = float(np.linalg.norm(Q[j] - sc.u))
        for u, w in enumerate(setting.users):
            lt = link_terms(Q[j], w, sc.u, ch, sc.M * sc.subsurface_size)
            z = complex(lt.block_sums(sc.subsurface_size) @ ph) * d_qu / math.sqrt(ch.rho0)
            tau = (lt.varpi - (ch.rho0 - k1) / lt.d_direct ** ch.beta1) * d_qu ** 2
            X[j, u] = ch.rho0 * abs(z) ** 2 + max(tau, 0.0)
            Y[j, u] = 2.0 * math.sqrt(k1 * ch.rho0) * z.real
    return X, Y


def init_aux(Q, A, theta, P, setting: Setting) -> PlacementAux:
    """Auxiliary values making every auxiliary constraint tight at ``Q``."""
    sc = setting.scenario
    Q = np.asarray(Q, float)
    check_placement(Q, sc)
    Wp = setting.users
    U = len(Wp)
    gk = setting.group_of
    D = np.linalg.norm(Q[:, None, :] - Wp[None, :, :], axis=2)  # (K, U)
    du = D[gk, np.arange(U)]
    dl = D.copy()
    dl[gk, np.arange(U)] = np.nan
    dirs = np.linalg.norm(Q - sc.u, axis=1)
    X, Y = gain_coefficients(setting, Q, theta)
    eta = setting.gains(Q, theta)
    eta_lo = eta[gk, np.arange(U)]
    eta_hi = eta.copy()
    eta_hi[gk, np.arange(U)] = np.nan
    coefs = setting.coefficients(P, A)
    Uv = np.empty(U)
    Wv = np.empty(U)
    for u, c in enumerate(coefs):
        interf = float(np.nansum(eta_hi[:, u] * c.total)) + c.noise
        Uv[u] = math.sqrt(interf)
        Wv[u] = c.intra + interf / eta_lo[u]
    return PlacementAux(du, dl, dirs.copy(), dirs.copy(), eta_lo, eta_hi, Uv, Wv, du ** 2, X, Y)


class PlacementError(ValueError):
    pass


def check_placement(Q, scenario, tol: float = 1e-7) -> None:
    Q = np.asarray(Q, float)
    if np.any(Q[:, 2] < scenario.z_min - tol) or np.any(Q[:, 2] > scenario.z_max + tol):
        raise PlacementError("UAV height outside [z_min, z_max]")
    for a in range(len(Q)):
        for b in range(a + 1, len(Q)):
            if np.linalg.norm(Q[a] - Q[b]) < scenario.delta_min * (1 - tol):
                raise PlacementError("UAV separation below delta_min")


def placement_objective(setting: Setting, Q, A, P, theta, xi: float):
    """True penalized objective ``-sum R + xi sum alpha (1 - alpha)`` and the penalty."""
    rates = setting.rates(Q, theta, P, A)
    pen = binary_penalty(A) if setting.scheme == "noma" else 0.0
    return -float(np.sum(rates)) + xi * pen, pen


def binary_penalty(A) -> float:
    tot = 0.0
    for a in A:
        off = ~np.eye(a.shape[0], dtype=bool)
        tot += float(np.sum(a[off] * (1 - a[off])))
    return tot


def binary_violation(A) -> float:
    v = 0.0
    for a in A:
        off = ~np.eye(a.shape[0], dtype=bool)
        if off.any():
            v = max(v, float(np.max(a[off] * (1 - a[off]))))
    return v


@dataclass
class PlacementHandles:
    q: np.ndarray
    alpha: list            # per group object matrix of Lin (diag constant 1)
    objective_const: float


def build_placement_subproblem(Q_n, A_n, aux: PlacementAux, P, theta, xi_alpha: float,
                               setting: Setting, trust_radius: float | None = None):
    """Convex surrogate around ``(Q_n, A_n)`` in normalized units.

    Returns ``(program, handles)``; ``handles.q`` holds UAV positions in
    ``LENGTH_UNIT`` metres and ``handles.alpha`` the relaxed indicators.
    """
    sc = setting.scenario
    ch = sc.channel
    L = LENGTH_UNIT
    beta = ch.beta1
    gref, pref = setting.g_ref, setting.p_ref
    K = setting.K
    Wu = setting.users / L
    Uc = len(Wu)
    gk = setting.group_of
    irs = sc.u / L
    Qn = np.asarray(Q_n, float) / L
    delta = (trust_radius if trust_radius is not None else sc.trust_radius) / L
    rho = ch.rho0 * L ** -beta / gref
    Xs = aux.X * L ** -2 / gref
    Ys = aux.Y * L ** (-beta / 2 - 1) / gref
    coefs = setting.coefficients(P, A_n)
    interf = setting.has_interference
    use_irs = setting.irs

    prog = ConicProgram("placement")
    q = prog.var((K, 3), "q")
    for k in range(K):
        prog.ge(q[k, 2], sc.z_min / L, name=f"zmin{k}")
        prog.le(q[k, 2], sc.z_max / L, name=f"zmax{k}")
        prog.soc(delta, list(q[k] - Qn[k]), name=f"trust{k}")
        if setting.fixed_location:
            prog.eq(q[k, :2], setting.anchors[k] / L, name=f"anchor{k}")
    # separation, linearized around Q_n
    dmin2 = (sc.delta_min / L) ** 2
    for a in range(K):
        for b in range(a + 1, K):
            d0 = Qn[a] - Qn[b]
            c0, c1 = sg.sq_norm(d0)
            expr = lin_sum([(c1[m], q[a, m]) for m in range(3)] + [(-c1[m], q[b, m]) for m in range(3)], c0)
            prog.ge(expr, dmin2, name=f"sep{a}.{b}")

    def dist_ub(var, x0, vec, name):
        # ||vec||^2 <= 2 x0 var - x0^2
        prog.rsoc(2 * x0 * var - x0 * x0, 1.0, list(vec), name=name)

    def dist_lb(var, qv, q0, pt, name):
        # var^2 <= ||q0 - pt||^2 + 2 (q0 - pt).(q - q0)
        d0 = q0 - pt
        lin = lin_sum([(2 * d0[m], qv[m]) for m in range(3)], float(d0 @ d0) - 2 * float(d0 @ q0))
        prog.rsoc(lin, 1.0, [var], name=name)

    def log_of(var, name):
        s = prog.var((), name)
        prog.exp_le(s, var, name=name)
        return s

    def convex_term(coef, terms, name):
        """epigraph of coef * exp(sum b*s), coef > 0."""
        e = prog.var((), name)
        prog.exp_le(lin_sum([(b, s) for b, s in terms], math.log(coef)), e, name=name)
        return e

    # UAV-IRS distances
    uu = ll = None
    if use_irs:
        uu = prog.var(K, "uu")
        ll = prog.var(K, "ll") if interf else None
        uu0 = aux.uu / L
        for k in range(K):
            dist_ub(uu[k], uu0[k], q[k] - irs, f"uu{k}")
            if interf:
                dist_lb(ll[k], q[k], Qn[k], irs, f"ll{k}")
    log_uu = [log_of(uu[k], f"log_uu{k}") for k in range(K)] if use_irs else None
    log_ll = [log_of(ll[k], f"log_ll{k}") for k in range(K)] if (use_irs and interf) else None

    du = prog.var(Uc, "du")
    eta_lo = prog.var(Uc, "eta_lo")
    Uv = prog.var(Uc, "U")
    Wv = prog.var(Uc, "W")
    du0 = aux.du / L
    obj_terms = []
    obj_const = 0.0

    alpha = None
    if setting.scheme == "noma":
        alpha = []
        for k in range(K):
            m = setting.sizes[k]
            a = np.empty((m, m), dtype=object)
            for t in range(m):
                a[t, t] = Lin({}, 1.0)
                for i in range(t + 1, m):
                    v = prog.var((), f"alpha{k}[{t},{i}]")
                    a[t, i] = v
                    a[i, t] = 1.0 - v
                    prog.ge(v, 0.0, name=f"alpha_lo{k}.{t}.{i}")
                    prog.le(v, 1.0, name=f"alpha_hi{k}.{t}.{i}")
            alpha.append(a)

    for u in range(Uc):
        k = int(gk[u])
        i = u - setting.offsets[k]
        c = coefs[u]
        dist_ub(du[u], du0[u], q[k] - Wu[u], f"du{u}")
        # served gain lower bound
        xk = du0[u]
        if use_irs:
            yk = aux.uu[k] / L
            (f0, fx, fy), (g0, gx, gy) = sg.power_pair(beta, rho, Xs[k, u], Ys[k, u], xk, yk)
            flb = lin_sum([(fx, du[u]), (fy, uu[k])], f0)
            Yv = Ys[k, u]
            if Yv >= 0:
                rhs = flb + Yv * lin_sum([(gx, du[u]), (gy, uu[k])], g0)
            else:
                s_du = log_of(du[u], f"log_du{u}")
                e = convex_term(1.0, [(-beta / 2, s_du), (-1.0, log_uu[k])], f"g_lo{u}")
                rhs = flb + Yv * e
        else:
            fx = -beta * rho * xk ** (-beta - 1)
            rhs = lin_sum([(fx, du[u])], rho * xk ** -beta - fx * xk)
        prog.le(eta_lo[u], rhs, name=f"eta_lo{u}")
        prog.ge(eta_lo[u], 1e-12, name=f"eta_pos{u}")
        # interference upper bounds and U
        ib_terms = []
        if interf:
            for j in range(K):
                if j == k or c.total[j] == 0.0:
                    continue
                dl = prog.var((), f"dl{j}.{u}")
                dist_lb(dl, q[j], Qn[j], Wu[u], f"dl{j}.{u}")
                s_dl = log_of(dl, f"log_dl{j}.{u}")
                eh = prog.var((), f"eta_hi{j}.{u}")
                parts = [convex_term(rho, [(-beta, s_dl)], f"f1_{j}.{u}")]
                if use_irs:
                    if Xs[j, u] > 0:
                        parts.append(convex_term(Xs[j, u], [(-2.0, log_ll[j])], f"f2_{j}.{u}"))
                    Ev = Ys[j, u]
                    if Ev > 0:
                        parts.append(convex_term(Ev, [(-beta / 2, s_dl), (-1.0, log_ll[j])], f"f3_{j}.{u}"))
                    elif Ev < 0:
                        x0 = aux.dl[j, u] / L
                        y0 = aux.ll[j] / L
                        _, (g0, gx, gy) = sg.power_pair(beta, rho, Xs[j, u], Ev, x0, y0)
                        parts.append(Ev * lin_sum([(gx, dl), (gy, ll[j])], g0))
                prog.ge(eh, lin_sum(parts), name=f"eta_hi{j}.{u}")
                ib_terms.append((c.total[j] / pref, eh))
        U0 = aux.U[u] / math.sqrt(gref * pref)
        noise = c.noise / (gref * pref)
        prog.ge(2 * U0 * Uv[u] - U0 * U0, lin_sum(ib_terms, noise), name=f"U{u}")
        # W >= intra + U^2 / eta_lo
        intra = Lin()
        if alpha is not None:
            m = setting.sizes[k]
            p = np.asarray(P[k], float) / pref
            intra = lin_sum([(p[t], alpha[k][t, i]) for t in range(m) if t != i])
        prog.rsoc(eta_lo[u], Wv[u] - intra, [Uv[u]], name=f"W{u}")
        # objective: -w * linearized rate in W
        W0 = aux.W[u] / pref
        s = c.own / pref
        c0, c1 = sg.rate_in_w(s, W0)
        obj_terms.append((-c.weight * c1, Wv[u]))
        obj_const -= c.weight * c0

    if alpha is not None:
        pi0 = aux.pi / L ** 2
        pi = prog.var(Uc, "pi")
        for u in range(Uc):
            k = int(gk[u])
            prog.rsoc(pi[u], 1.0, list(q[k] - Wu[u]), name=f"pi{u}")
        for k in range(K):
            m = setting.sizes[k]
            off = setting.offsets[k]
            a0 = np.asarray(A_n[k], float)
            p = np.asarray(P[k], float)
            for t in range(m):
                for i in range(m):
                    if t == i:
                        continue
                    at = alpha[k][t, i]
                    # binary penalty
                    b0, b1 = sg.binary_penalty(a0[t, i])
                    obj_terms.append((xi_alpha * b1, at))
                    obj_const += xi_alpha * b0
                    # power order alpha_{t,i} p_t <= p_i
                    if p[t] > 0:
                        prog.le(p[t] * at, p[i], name=f"porder{k}.{t}.{i}")
                    # alpha_{t,i} pi_t <= ||q_k - w_i||^2 (convexified)
                    c0, c1 = sg.product_ub(a0[t, i], pi0[off + t])
                    d0 = Qn[k] - Wu[off + i]
                    rhs = lin_sum([(2 * d0[mm], q[k, mm]) for mm in range(3)],
                                  float(d0 @ d0) - 2 * float(d0 @ Qn[k]))
                    R = rhs - c0 - c1 * (at - pi[off + t])
                    prog.rsoc(R, 1.0, [0.5 * (at + pi[off + t])], name=f"order{k}.{t}.{i}")
    prog.minimize(lin_sum(obj_terms, obj_const))
    return prog, PlacementHandles(q, alpha, obj_const)


def _read_alpha(sol, handles: PlacementHandles, sizes):
    if handles.alpha is None:
        return None
    out = []
    for a in handles.alpha:
        v = np.vectorize(lambda t: t.value(sol.x), otypes=[float])(a)
        out.append(np.clip(v, 0.0, 1.0))
    return out


def solve_placement(Q0, A0, P, theta, schedule: PenaltySchedule, setting: Setting,
                    gamma0: float | None = None):
    """Penalty SCA over placement and decoding order.

    Returns ``(Q, A, aux, trace)``; ``A`` is a valid binary order consistent
    with the final distances and powers.
    """
    sc = setting.scenario
    trace = Trace("placement")
    Q = np.array(Q0, float)
    A = [np.array(a, float) for a in A0] if A0 is not None else None
    if gamma0 is None:
        gamma0 = float(np.sum(setting.rates(Q, theta, P, A)))
    noma = setting.scheme == "noma"
    xi = schedule.xi_alpha_rel * max(abs(gamma0), 1e-3) if noma else 0.0
    J, pen = placement_objective(setting, Q, A, P, theta, xi)
    trace.add(J, pen, binary_violation(A) if noma else 0.0, status="start", xi=xi)
    for _ in range(schedule.outer_max):
        for _ in range(schedule.inner_max):
            aux = init_aux(Q, A, theta, P, setting)
            radius = sc.trust_radius
            accepted = False
            for _attempt in range(6):
                prog, h = build_placement_subproblem(Q, A, aux, P, theta, xi, setting, radius)
                sol = solve(prog, schedule.feas_tol, schedule.gap_tol, schedule.solver_max_iter)
                if sol.status in ("infeasible", "unbounded"):
                    trace.note = f"solver status {sol.status}"
                    raise SubproblemError("placement subproblem " + sol.status, trace)
                if not np.all(np.isfinite(sol.x)):
                    radius *= 0.5
                    continue
                Qn = _clean_q(sol.value(h.q) * LENGTH_UNIT, Q, sc, radius)
                An = _read_alpha(sol, h, setting.sizes) if noma else A
                try:
                    check_placement(Qn, sc)
                except PlacementError:
                    radius *= 0.5
                    continue
                Jn, pen = placement_objective(setting, Qn, An, P, theta, xi)
                if Jn <= J + 1e-12 * max(1.0, abs(J)):
                    accepted = True
                    break
                radius *= 0.5  # frozen angles too coarse: shrink the step
            if not accepted:
                break
            trace.add(Jn, pen, binary_violation(An) if noma else 0.0,
                      surrogate=sol.objective, status=sol.status, xi=xi)
            change = J - Jn
            Q, A, J = Qn, An, Jn
            if change <= schedule.obj_tol * max(1.0, abs(J)):
                break
        if not noma or binary_violation(A) <= schedule.binary_tol:
            break
        xi *= schedule.omega
        J, pen = placement_objective(setting, Q, A, P, theta, xi)
        trace.add(J, pen, binary_violation(A), status="penalty_increase", xi=xi)
    if noma:
        A = finalize_order(Q, A, P, setting, trace)
    aux = init_aux(Q, A, theta, P, setting)
    return Q, A, aux, trace


def _clean_q(Qn, Q, sc, radius):
    """Clip solver round-off on heights and the trust region."""
    Qn = Qn.copy()
    Qn[:, 2] = np.clip(Qn[:, 2], sc.z_min, sc.z_max)
    for k in range(len(Qn)):
        step = Qn[k] - Q[k]
        nrm = np.linalg.norm(step)
        if nrm > radius:
            Qn[k] = Q[k] + step * (radius / nrm)
    return Qn


def finalize_order(Q, A, P, setting: Setting, trace: Trace | None = None, tol: float = 1e-6):
    """Round relaxed indicators and verify pair sums, power order and distance order.

    A relaxed order that is binary only up to ``binary_tol`` can swap two
    almost equidistant users; such a rounding is repaired to the distance
    order.  A rounding that breaks the power order is an error.
    """
    out = []
    for k, a in enumerate(A):
        r = round_order(a)
        if not is_valid_order(r):
            raise SubproblemError("rounded decoding order is not a total order", trace)
        p = np.asarray(P[k], float)
        d = np.linalg.norm(setting.scenario.users(k) - Q[k], axis=1)
        if not _agrees(r, d, tol):
            r = distance_decoding_order(Q[k], setting.scenario.users(k))
            if trace is not None:
                trace.note = (trace.note + "; " if trace.note else "") + f"order {k} repaired to distances"
        m = len(p)
        for t in range(m):
            for i in range(m):
                if t != i and r[t, i] == 1.0 and p[t] > p[i] * (1 + tol) + 1e-15:
                    raise SubproblemError("decoding order violates the power order", trace)
        out.append(r)
    return out


def _agrees(r, d, tol):
    m = len(d)
    return all(not (t != i and r[t, i] == 1.0 and d[t] > d[i] * (1 + tol)) for t in range(m) for i in range(m))
