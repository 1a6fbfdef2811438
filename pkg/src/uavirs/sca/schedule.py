from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty growth and stopping rules shared by the three SCA solvers.

    ``xi_alpha_rel`` and ``xi_v_rel`` scale the initial penalties by the
    magnitude of the starting sum rate.
    """
    xi_alpha_rel: float = 1e-3
    xi_v_rel: float = 1e-2
    omega: float = 10.0
    inner_max: int = 30
    outer_max: int = 6
    binary_tol: float = 1e-4
    rank_tol: float = 1e-3
    obj_tol: float = 1e-4
    bcd_max: int = 50
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    solver_max_iter: int = 200

    def __post_init__(self):
        if not self.omega > 1:
            raise ValueError("omega must be > 1")
        for name in ("binary_tol", "rank_tol", "obj_tol", "xi_alpha_rel", "xi_v_rel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.inner_max < 1 or self.outer_max < 1 or self.bcd_max < 1:
            raise ValueError("iteration caps must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceEntry:
    """One SCA iteration: objective is the true penalized objective after the step.

    ``xi`` is the penalty coefficient in force; objectives are comparable only
    between entries with equal ``xi``.  Status ``rejected`` marks a trial step
    that was discarded because it worsened the objective.
    """
    iteration: int
    objective: float
    penalty: float
    binary_violation: float = 0.0
    rank_ratio: float = 0.0
    surrogate: float = float("nan")
    status: str = "optimal"
    xi: float = 0.0

    def as_tuple(self):
        return (self.iteration, self.objective, self.penalty, self.binary_violation, self.rank_ratio)


@dataclass
class Trace:
    block: str
    entries: list = field(default_factory=list)
    note: str = ""

    def add(self, *args, **kw):
        self.entries.append(TraceEntry(len(self.entries), *args, **kw))

    def objectives(self):
        return [e.objective for e in self.entries]

    def to_dict(self) -> dict:
        return {"block": self.block, "note": self.note,
                "entries": [asdict(e) for e in self.entries]}


class SubproblemError(RuntimeError):
    def __init__(self, msg: str, trace: Trace | None = None):
        super().__init__(msg)
        self.trace = trace
