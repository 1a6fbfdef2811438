"""Block coordinate ascent over placement/order, IRS phases and powers."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .rates import check_scheme, distance_decoding_order, is_valid_order
from .scenario import Scenario
from .sca.common import Setting
from .sca.irs import extract_phases, lift, rank_ratio, solve_irs
from .sca.placement import PlacementError, check_placement, solve_placement
from .sca.power import solve_power
from .sca.schedule import PenaltySchedule, SubproblemError

log = logging.getLogger("uavirs")

VARIANTS = ("with_irs", "no_irs", "fixed_location")


@dataclass
class DecisionState:
    Q: np.ndarray                 # (K, 3) UAV positions
    P: list                       # per group: user powers (NOMA) or [uav power]
    A: list                       # per group decoding-order matrix
    theta: np.ndarray             # (M,) sub-surface phases

    def copy(self) -> "DecisionState":
        return DecisionState(self.Q.copy(), [p.copy() for p in self.P], [a.copy() for a in self.A],
                             self.theta.copy())

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "P": [p.tolist() for p in self.P],
                "A": [a.tolist() for a in self.A], "theta": self.theta.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "DecisionState":
        return DecisionState(np.array(d["Q"], float), [np.array(p, float) for p in d["P"]],
                             [np.array(a, float).reshape(len(a), -1) for a in d["A"]],
                             np.array(d["theta"], float))


@dataclass
class RunRecord:
    seed: int
    scheme: str
    variant: str
    init: DecisionState | None
    gammas: list = field(default_factory=list)      # Gamma after init and after every BCD iteration
    traces: list = field(default_factory=list)      # per iteration: {block: trace dict}
    final: DecisionState | None = None
    gamma: float = float("nan")
    status: str = "ok"
    message: str = ""
    wall_time: float = 0.0
    m: int = 0
    p_max: float = 0.0
    delta_min: float = 0.0

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    @property
    def iterations(self) -> int:
        return max(0, len(self.gammas) - 1)

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "seed": self.seed, "scheme": self.scheme, "variant": self.variant,
            "m": self.m, "p_max": self.p_max, "delta_min": self.delta_min,
            "status": self.status, "message": self.message,
            "gamma": self.gamma, "gammas": list(self.gammas),
            "init": self.init.to_dict() if self.init is not None else None,
            "final": self.final.to_dict() if self.final is not None else None,
            "traces": self.traces,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunRecord":
        return RunRecord(
            seed=d["seed"], scheme=d["scheme"], variant=d["variant"],
            init=DecisionState.from_dict(d["init"]) if d.get("init") else None, gammas=list(d["gammas"]), traces=d["traces"],
            final=DecisionState.from_dict(d["final"]) if d.get("final") else None,
            gamma=d["gamma"], status=d["status"], message=d.get("message", ""),
            wall_time=d.get("wall_time", 0.0), m=d.get("m", 0), p_max=d.get("p_max", 0.0),
            delta_min=d.get("delta_min", 0.0))


def make_setting(scenario: Scenario, scheme: str = "noma", variant: str = "with_irs") -> Setting:
    scheme = check_scheme(scheme)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "no_irs":
        scenario = scenario.with_(irs_enabled=False)
    elif not scenario.irs_enabled:
        raise ValueError(f"variant {variant!r} needs a scenario with an IRS")
    return Setting(scenario, scheme, fixed_location=(variant == "fixed_location"))


def random_init(seed: int, scenario: Scenario | Setting, max_tries: int = 1000) -> DecisionState:
    """Uniform horizontal positions per group area, mid height, distance order,
    equal power split (per-UAV P_max for OMA/IF), uniform phases."""
    setting = scenario if isinstance(scenario, Setting) else Setting(scenario)
    sc = setting.scenario
    rng = np.random.default_rng(seed)
    z = 0.5 * (sc.z_min + sc.z_max)
    for _ in range(max_tries):
        Q = np.zeros((sc.K, 3))
        for k, g in enumerate(sc.groups):
            lo, hi = g.sampling_box()
            Q[k, :2] = rng.uniform(lo, hi)
            Q[k, 2] = z
        if setting.fixed_location:
            Q[:, :2] = setting.anchors
        try:
            check_placement(Q, sc)
            break
        except PlacementError:
            if setting.fixed_location:
                raise ValueError("group means violate the UAV separation") from None
    else:
        raise ValueError("could not sample UAV positions respecting delta_min")
    theta = rng.uniform(0.0, 2 * np.pi, sc.M) if setting.irs else np.zeros(0)
    A = [distance_decoding_order(Q[k], sc.users(k)) for k in range(sc.K)]
    if setting.scheme == "noma":
        P = [np.full(m, sc.p_max[k] / m) for k, m in enumerate(sc.group_sizes)]
    else:
        P = [np.array([sc.p_max[k]]) for k in range(sc.K)]
    return DecisionState(Q, P, A, theta)


def _accept(gamma_new: float, gamma_old: float) -> bool:
    return gamma_new >= gamma_old - 1e-9 * max(1.0, abs(gamma_old))


def bcd_run(init: DecisionState, setting: Setting, schedule: PenaltySchedule | None = None,
            seed: int = 0, variant: str | None = None) -> RunRecord:
    """Alternate the three blocks until the relative sum-rate gain drops below obj_tol.

    A block result is kept only if it does not lower the exact expected sum
    rate, so the recorded sequence is non-decreasing.
    """
    schedule = schedule or PenaltySchedule()
    sc = setting.scenario
    if variant is None:
        variant = "fixed_location" if setting.fixed_location else ("with_irs" if sc.irs_enabled else "no_irs")
    rec = RunRecord(seed, setting.scheme, variant, init.copy(), m=sc.M, p_max=float(max(sc.p_max)),
                    delta_min=sc.delta_min)
    t0 = time.perf_counter()
    st = init.copy()
    gamma = setting.sum_rate(st)
    rec.gammas.append(gamma)
    try:
        for it in range(schedule.bcd_max):
            start = gamma
            tr = {}
            # placement and decoding order
            Q, A, _, trace = solve_placement(st.Q, st.A, st.P, st.theta, schedule, setting, gamma0=gamma)
            tr["placement"] = trace.to_dict()
            cand = DecisionState(Q, st.P, A, st.theta)
            g = setting.sum_rate(cand)
            tr["placement"]["accepted"] = bool(_accept(g, gamma))
            if _accept(g, gamma):
                st, gamma = cand, g
            # IRS phases
            if setting.irs:
                quad = setting.quad(st.Q)
                V, trace = solve_irs(lift(st.theta), quad, st.P, st.A, schedule, setting, gamma0=gamma)
                theta = extract_phases(V, rank_tol=None)
                cand = DecisionState(st.Q, st.P, st.A, theta)
                g = setting.sum_rate(cand)
                tr["irs"] = trace.to_dict()
                tr["irs"]["rank_ratio"] = rank_ratio(V)
                tr["irs"]["accepted"] = bool(_accept(g, gamma))
                if _accept(g, gamma):
                    st, gamma = cand, g
            # powers
            if setting.has_power:
                eta = setting.gains(st.Q, st.theta)
                P, trace = solve_power(st.P, eta, st.A, schedule, setting)
                cand = DecisionState(st.Q, P, st.A, st.theta)
                g = setting.sum_rate(cand)
                tr["power"] = trace.to_dict()
                tr["power"]["accepted"] = bool(_accept(g, gamma))
                if _accept(g, gamma):
                    st, gamma = cand, g
            rec.traces.append(tr)
            rec.gammas.append(gamma)
            log.info("seed %s iter %d gamma %.6f", seed, it + 1, gamma)
            if gamma - start <= schedule.obj_tol * max(1.0, abs(gamma)):
                break
    except (SubproblemError, PlacementError, np.linalg.LinAlgError, ValueError) as exc:
        rec.status = "failed"
        rec.message = f"{type(exc).__name__}: {exc}"
        trace = getattr(exc, "trace", None)
        if trace is not None:
            rec.traces.append({"failed": trace.to_dict()})
    rec.final = st
    rec.gamma = gamma
    rec.wall_time = time.perf_counter() - t0
    return rec


def multistart(setting: Setting, schedule: PenaltySchedule | None = None, seeds=None,
               variant: str | None = None):
    """Run one BCD per seed; return ``(best, all)`` with best = max final sum rate."""
    seeds = list(range(setting.scenario.multistart_count)) if seeds is None else list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    records = [bcd_run(random_init(s, setting), setting, schedule, seed=s, variant=variant) for s in seeds]
    ok = [r for r in records if not r.failed]
    if not ok:
        raise RuntimeError("all multistart runs failed: " + "; ".join(r.message for r in records))
    best = max(ok, key=lambda r: r.gamma)
    return best, records


def run_benchmark(scheme: str, variant: str, scenario: Scenario, schedule: PenaltySchedule | None = None,
                  seeds=None) -> RunRecord:
    setting = make_setting(scenario, scheme, variant)
    best, _ = multistart(setting, schedule, seeds, variant=variant)
    return best


def is_feasible(state: DecisionState, setting: Setting, tol: float = 1e-7) -> bool:
    """Original constraint set: heights, separation, orders, powers, phase domain."""
    sc = setting.scenario
    try:
        check_placement(state.Q, sc, tol)
    except PlacementError:
        return False
    if np.any(state.theta < 0) or np.any(state.theta >= 2 * np.pi):
        return False
    for k in range(sc.K):
        p = np.asarray(state.P[k], float)
        if np.any(p < -tol):
            return False
        if p.sum() > sc.p_max[k] * (1 + tol):
            return False
        if setting.scheme == "noma":
            a = state.A[k]
            if not is_valid_order(a):
                return False
            m = len(p)
            d = np.linalg.norm(sc.users(k) - state.Q[k], axis=1)
            for t in range(m):
                for i in range(m):
                    if t != i and a[t, i] == 1 and (p[t] > p[i] * (1 + tol) + 1e-15 or d[t] > d[i] * (1 + tol)):
                        return False
    return True
