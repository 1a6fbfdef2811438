"""Penalty / SCA solvers for the placement, IRS phase and power blocks."""
from .common import Setting
from .irs import solve_irs
from .placement import solve_placement
from .power import solve_power
from .schedule import PenaltySchedule, SubproblemError, Trace

__all__ = ["Setting", "solve_irs", "solve_placement", "solve_power", "PenaltySchedule",
           "SubproblemError", "Trace"]
