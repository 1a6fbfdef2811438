"""IRS phase block: SDR with a nuclear-minus-spectral rank-one penalty.

With ``v = [exp(j theta); 1]`` and ``V = v v^H`` every expected gain is
``Tr(H V) + varpi``.  Dropping rank(V) = 1 and linearizing the concave parts
gives, per SCA step, the convex program

    min  sum_u w_u (-log2(<B_u, V> + c_u)) + <C, V> + const
    s.t. diag(V) = 1,  V psd

where ``<X, Y> = Re Tr(X Y)``.  The objective touches V only through a few
linear functionals, so a primal barrier method whose Newton system has
``n + U`` unknowns solves it far faster than a generic conic solver on the
real embedding.  :meth:`IrsProgram.to_conic` gives the generic form, used to
cross-check the two routes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..conic import ConicProgram, ConicSolution, lin_sum
from ..rates import LOG2E, dc_split_theta
from .common import Setting
from .schedule import PenaltySchedule, SubproblemError, Trace
from .surrogates import spectral_lower


class RankError(ValueError):
    pass


def _inner(A: np.ndarray, B: np.ndarray) -> float:
    """Re Tr(A B) for Hermitian A, B."""
    return float(np.real(np.sum(A * B.T)))


@dataclass
class IrsProgram:
    """``min sum_u w_u(-log2(<B_u,V> + c_u)) + <C,V> + const`` over the elliptope."""
    B: np.ndarray      # (U, n, n) Hermitian PSD
    c: np.ndarray      # (U,) positive
    w: np.ndarray      # (U,) nonnegative weights
    C: np.ndarray      # (n, n) Hermitian
    const: float = 0.0

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def functionals(self, V: np.ndarray) -> np.ndarray:
        return np.array([_inner(b, V) for b in self.B])

    def objective(self, V: np.ndarray) -> float:
        s = self.functionals(V) + self.c
        return float(-np.sum(self.w * np.log2(s)) + _inner(self.C, V) + self.const)

    # -- generic lowering ----------------------------------------------------
    def to_conic(self) -> tuple[ConicProgram, object]:
        prog = ConicProgram("irs")
        V = prog.hermitian_psd(self.n, "V")
        for m in range(self.n):
            prog.eq(V.re[m, m], 1.0, name=f"diag{m}")
        t = prog.var(len(self.c), "t")
        for u in range(len(self.c)):
            prog.log_ge(t[u], V.inner(self.B[u]) + float(self.c[u]), name=f"log{u}")
        obj = lin_sum([(-self.w[u] * LOG2E, t[u]) for u in range(len(self.c))], self.const)
        prog.minimize(obj + V.inner(self.C))
        return prog, V

    # -- structured barrier solver -----------------------------------------
    def solve(self, gap_tol: float = 1e-8, max_iter: int = 400, mu: float = 10.0) -> ConicSolution:
        return elliptope_barrier(self, gap_tol=gap_tol, max_iter=max_iter, mu=mu)


def _logdet(V: np.ndarray):
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))


def elliptope_barrier(prog: IrsProgram, gap_tol: float = 1e-8, max_iter: int = 400,
                      mu: float = 10.0, V0: np.ndarray | None = None) -> ConicSolution:
    """Feasible-start primal barrier method for :class:`IrsProgram`.

    Minimizes ``t F(V) - log det V`` on ``diag(V) = 1`` for increasing ``t``;
    every iterate keeps a unit diagonal and stays positive definite.  The
    reported gap is the barrier bound ``n / t`` relative to ``max(1, |F|)``.
    """
    n = prog.n
    U = len(prog.c)
    V = np.eye(n, dtype=complex) if V0 is None else V0.astype(complex)
    B = prog.B
    w = prog.w
    ln2 = math.log(2.0)

    def F(Vx):
        s = np.array([_inner(b, Vx) for b in B]) + prog.c
        if np.any(s <= 0):
            return math.inf
        return float(-np.sum(w * np.log(s)) / ln2 + _inner(prog.C, Vx))

    t = max(1.0, n / max(1.0, abs(F(V))))
    newton = 0
    status = "max_iter"
    Fv = F(V)
    while newton < max_iter:
        # centering at the current t
        while newton < max_iter:
            newton += 1
            s = np.array([_inner(b, V) for b in B]) + prog.c
            d1 = -w / (s * ln2)             # phi'
            d2 = w / (s * s * ln2)          # phi''
            Vi = np.linalg.inv(V)
            Vi = 0.5 * (Vi + Vi.conj().T)
            g = t * (np.tensordot(d1, B, axes=1) + prog.C) - Vi
            G = -g
            P = V @ G @ V
            Qs = np.array([V @ b @ V for b in B]) if U else np.zeros((0, n, n))
            S = np.abs(V) ** 2
            Kmat = np.real(np.einsum("umm->mu", Qs)) if U else np.zeros((n, 0))
            T = np.array([[_inner(B[a], Qs[b]) for b in range(U)] for a in range(U)]) if U else np.zeros((0, 0))
            d = t * d2
            lhs = np.zeros((n + U, n + U))
            lhs[:n, :n] = S
            lhs[:n, n:] = -Kmat * d[None, :]
            lhs[n:, :n] = -Kmat.T
            lhs[n:, n:] = np.eye(U) + T * d[None, :]
            rhs = np.concatenate([-np.real(np.diag(P)), [_inner(b, P) for b in B]])
            try:
                sol = np.linalg.solve(lhs, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
            nu, beta = sol[:n], sol[n:]
            inner = np.diag(nu).astype(complex) + G
            if U:
                inner = inner - np.tensordot(d * beta, B, axes=1)
            D = V @ inner @ V
            D = 0.5 * (D + D.conj().T)
            np.fill_diagonal(D, 0.0)
            lam2 = -_inner(g, D)
            if lam2 <= 2e-10:
                break
            # backtracking line search on the barrier objective
            ld = _logdet(V)
            phi0 = t * Fv - ld
            step = 1.0
            while step > 1e-12:
                Vn = V + step * D
                ldn = _logdet(Vn)
                if ldn is not None:
                    Fn = F(Vn)
                    if t * Fn - ldn <= phi0 - 0.25 * step * lam2:
                        break
                step *= 0.5
            else:
                break
            V = Vn
            dg = np.sqrt(np.real(np.diag(V)))
            V = V / np.outer(dg, dg)
            V = 0.5 * (V + V.conj().T)
            Fv = F(V)
        if n / t <= gap_tol * max(1.0, abs(Fv)):
            status = "optimal"
            break
        t *= mu
    obj = Fv + prog.const
    gap = (n / t) / max(1.0, abs(obj))
    diag_err = float(np.max(np.abs(np.diag(V) - 1.0)))
    min_eig = float(np.linalg.eigvalsh(V)[0])
    res = max(diag_err, max(0.0, -min_eig))
    x = np.concatenate([V.real.ravel(), V.imag.ravel()])
    return ConicSolution(status, x, obj, gap, res, newton, 0.0,
                         {"backend": "elliptope-barrier", "V": V, "t": t})


# -- subproblem construction --------------------------------------------------

def _user_splits(setting: Setting, quad, P, A):
    sc = setting.scenario
    out = []
    for k in range(setting.K):
        for i in range(setting.sizes[k]):
            out.append((k, i, dc_split_theta(k, i, quad, P, A, sc.channel.sigma2, scheme=setting.scheme,
                                             sizes=list(setting.sizes), p_max=sc.p_max,
                                             offsets=setting.offsets)))
    return out


def _scaled_H(setting: Setting, quad):
    """Per-user per-UAV stacked rows scaled to normalized gain units."""
    return quad.rows / math.sqrt(setting.g_ref)


def irs_true_objective(setting: Setting, quad, P, A, V: np.ndarray, xi: float):
    """``-sum R(V) + xi (Tr V - ||V||_2)`` and the penalty value."""
    rates = irs_rates(setting, quad, P, A, V)
    ev = np.linalg.eigvalsh(V)
    pen = float(np.real(np.trace(V)) - ev[-1])
    return -float(np.sum(rates)) + xi * pen, pen


def irs_rates(setting: Setting, quad, P, A, V: np.ndarray) -> np.ndarray:
    rows = quad.rows
    vals = np.real(np.einsum("jua,ba,jub->ju", np.conj(rows), V, rows))  # Tr(H V) = row V row^H
    out = []
    for k, i, sp in _user_splits(setting, quad, P, A):
        out.append(sp.value(vals[:, setting.flat(k, i)]))
    return np.array(out)


def build_irs_subproblem(V_n: np.ndarray, quad, P, A, xi_v: float, setting: Setting) -> IrsProgram:
    """Convex surrogate around ``V_n`` in normalized gain units."""
    rows = _scaled_H(setting, quad)
    n = V_n.shape[0]
    gs = setting.g_ref * setting.p_ref  # common scale of all log arguments
    Bs, cs, ws = [], [], []
    C = np.zeros((n, n), complex)
    const = 0.0
    for k, i, sp in _user_splits(setting, quad, P, A):
        u = setting.flat(k, i)
        Hs = [np.outer(np.conj(rows[j, u]), rows[j, u]) for j in range(setting.K)]
        # f: concave part kept exactly
        f_lin = sp.f_lin / setting.p_ref
        Bf = sum(f_lin[j] * Hs[j] for j in range(setting.K))
        Bs.append(Bf)
        cs.append(sp.f_const / gs)
        ws.append(sp.weight)
        # g: linearized at V_n
        g_lin = sp.g_lin / setting.p_ref
        Bg = sum(g_lin[j] * Hs[j] for j in range(setting.K))
        sg = _inner(Bg, V_n) + sp.g_const / gs
        C += sp.weight * LOG2E / sg * Bg
        const += sp.weight * (math.log2(sg) - LOG2E / sg * _inner(Bg, V_n))
    # rank-one penalty: Tr(V) - u^H V u
    umax, _ = spectral_lower(V_n)
    C += xi_v * (np.eye(n) - np.outer(umax, np.conj(umax)))
    C = 0.5 * (C + C.conj().T)
    return IrsProgram(np.array(Bs), np.array(cs), np.array(ws), C, const)


def rank_ratio(V: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(0.5 * (V + V.conj().T))
    if ev[-1] <= 0:
        return 1.0
    return float(max(ev[-2], 0.0) / ev[-1]) if len(ev) > 1 else 0.0


def extract_phases(V: np.ndarray, rank_tol: float | None = 1e-3) -> np.ndarray:
    """Phases from the principal eigenvector, last entry normalized to 1."""
    V = 0.5 * (V + V.conj().T)
    if rank_tol is not None and rank_ratio(V) > rank_tol:
        raise RankError(f"rank ratio {rank_ratio(V):.3e} exceeds {rank_tol:.1e}")
    _, U = np.linalg.eigh(V)
    v = U[:, -1]
    v = v / v[-1]
    return np.mod(np.angle(v[:-1]), 2 * np.pi)


def lift(theta) -> np.ndarray:
    v = np.concatenate([np.exp(1j * np.asarray(theta, float)), [1.0]])
    return np.outer(v, np.conj(v))


def solve_irs(V0: np.ndarray, quad, P, A, schedule: PenaltySchedule, setting: Setting,
              gamma0: float | None = None):
    """Penalty SCA for the phase block.  Returns ``(V, trace)``."""
    trace = Trace("irs")
    V = np.array(V0, complex)
    if gamma0 is None:
        gamma0 = float(np.sum(irs_rates(setting, quad, P, A, V)))
    xi = schedule.xi_v_rel * max(abs(gamma0), 1e-3)
    J, pen = irs_true_objective(setting, quad, P, A, V, xi)
    trace.add(J, pen, 0.0, rank_ratio(V), status="start", xi=xi)
    for _ in range(schedule.outer_max):
        for _ in range(schedule.inner_max):
            prog = build_irs_subproblem(V, quad, P, A, xi, setting)
            sol = prog.solve(gap_tol=schedule.gap_tol)
            Vn = sol.info["V"]
            if sol.status != "optimal" and not np.all(np.isfinite(Vn)):
                trace.note = f"solver status {sol.status}"
                raise SubproblemError("IRS subproblem failed", trace)
            Jn, pen = irs_true_objective(setting, quad, P, A, Vn, xi)
            if Jn > J + 1e-9 * max(1.0, abs(J)):  # solver round-off: keep the incumbent
                trace.add(Jn, pen, 0.0, rank_ratio(Vn), surrogate=sol.objective, status="rejected", xi=xi)
                break
            trace.add(Jn, pen, 0.0, rank_ratio(Vn), surrogate=sol.objective, status=sol.status, xi=xi)
            change = J - Jn
            V, J = Vn, Jn
            if change <= schedule.obj_tol * max(1.0, abs(J)):
                break
        if rank_ratio(V) <= schedule.rank_tol:
            break
        xi *= schedule.omega
        J, pen = irs_true_objective(setting, quad, P, A, V, xi)
        trace.add(J, pen, 0.0, rank_ratio(V), status="penalty_increase", xi=xi)
    return V, trace
