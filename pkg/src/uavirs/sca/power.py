"""Power block: SCA on the difference-of-concave rate split over powers."""
from __future__ import annotations


import numpy as np

from ..conic import ConicProgram, lin_sum, solve
from ..rates import LOG2E, dc_split_power, flatten_power, power_layout, strength_rank, unflatten_power
from .common import Setting
from .schedule import PenaltySchedule, SubproblemError, Trace
from .surrogates import log_affine_upper


def _splits(setting: Setting, eta, A):
    sc = setting.scenario
    out = []
    for k in range(setting.K):
        for i in range(setting.sizes[k]):
            out.append(dc_split_power(k, i, eta, A, sc.channel.sigma2, scheme=setting.scheme,
                                      sizes=list(setting.sizes)))
    return out


def power_objective(setting: Setting, eta, A, x_flat) -> float:
    """``-sum R`` at flat powers (watts)."""
    return -float(sum(sp.value(x_flat) for sp in _splits(setting, eta, A)))


def build_power_subproblem(P_n, eta, A, setting: Setting):
    """Convex surrogate around ``P_n``.  Returns ``(program, x)`` with ``x`` in units of p_ref."""
    sc = setting.scenario
    s2 = sc.channel.sigma2
    pr = setting.p_ref
    x0 = flatten_power(setting.scheme, P_n) / pr
    layout = power_layout(setting.scheme, setting.sizes)
    prog = ConicProgram("power")
    x = prog.var(len(x0), "p")
    prog.ge(x, 0.0, name="nonneg")
    for k, ix in enumerate(layout):
        cap = sc.p_max[k] / pr
        if setting.scheme == "noma":
            prog.le(lin_sum(x[ix]), cap, name=f"budget{k}")
            a = np.asarray(A[k], float)
            for t in range(len(ix)):
                for i in range(len(ix)):
                    if t != i and a[t, i] > 0:
                        prog.le(a[t, i] * x[ix[t]], x[ix[i]], name=f"order{k}.{t}.{i}")
        else:
            prog.le(x[ix[0]], cap, name=f"budget{k}")
    splits = _splits(setting, eta, A)
    t = prog.var(len(splits), "t")
    terms = []
    const = 0.0
    for u, sp in enumerate(splits):
        f_lin = sp.f_lin * pr / s2
        g_lin = sp.g_lin * pr / s2
        prog.log_ge(t[u], lin_sum(zip(f_lin, x), 1.0), name=f"f{u}")
        c0, grad = log_affine_upper(g_lin, 1.0, x0)
        terms.append((-sp.weight * LOG2E, t[u]))
        terms.extend((sp.weight * gk, xk) for gk, xk in zip(grad, x) if gk != 0.0)
        const += sp.weight * c0
    prog.minimize(lin_sum(terms, const))
    return prog, x


def solve_power(P0, eta, A, schedule: PenaltySchedule, setting: Setting):
    """Algorithm-3 style SCA.  Returns ``(P, trace)``; P never lowers the sum rate."""
    trace = Trace("power")
    P = [np.array(p, float) for p in P0]
    x = flatten_power(setting.scheme, P)
    J = power_objective(setting, eta, A, x)
    trace.add(J, 0.0, status="start")
    for _ in range(schedule.inner_max):
        prog, xv = build_power_subproblem(P, eta, A, setting)
        sol = solve(prog, schedule.feas_tol, schedule.gap_tol, schedule.solver_max_iter)
        if sol.status in ("infeasible", "unbounded"):
            trace.note = f"solver status {sol.status}"
            raise SubproblemError("power subproblem " + sol.status, trace)
        if not np.all(np.isfinite(sol.x)):
            trace.note = f"solver status {sol.status}"
            break
        xn = np.maximum(sol.value(xv), 0.0) * setting.p_ref
        xn = _project(setting, xn, A)
        Jn = power_objective(setting, eta, A, xn)
        if Jn > J:  # tolerance-level increase: keep the incumbent
            trace.add(Jn, 0.0, surrogate=sol.objective, status="rejected")
            break
        trace.add(Jn, 0.0, surrogate=sol.objective, status=sol.status)
        change = J - Jn
        x, J = xn, Jn
        P = unflatten_power(setting.scheme, x, setting.sizes)
        if change <= schedule.obj_tol * max(1.0, abs(J)):
            break
    return P, trace


def _project(setting: Setting, x: np.ndarray, A) -> np.ndarray:
    """Remove solver round-off: enforce budgets and the power order exactly."""
    sc = setting.scenario
    out = x.copy()
    for k, ix in enumerate(power_layout(setting.scheme, setting.sizes)):
        p = out[ix]
        if setting.scheme == "noma":
            a = np.asarray(A[k], float)
            # weakest user first: each user at least as large as every stronger one
            order = strength_rank(a)
            for pos in range(1, len(order)):
                p[order[pos]] = max(p[order[pos]], p[order[pos - 1]])
            tot = p.sum()
            if tot > sc.p_max[k]:
                p *= sc.p_max[k] / tot
        else:
            p = np.minimum(p, sc.p_max[k])
        out[ix] = p
    return out
