"""Joint UAV placement, NOMA power / decoding order and IRS phase optimization."""
from .scenario import Scenario, ScenarioError, load_scenario, make_scenario, reference_scenario
from .bcd import DecisionState, RunRecord, bcd_run, make_setting, multistart, random_init, run_benchmark

__all__ = [
    "Scenario", "ScenarioError", "load_scenario", "make_scenario", "reference_scenario",
    "DecisionState", "RunRecord", "bcd_run", "make_setting", "multistart", "random_init", "run_benchmark",
]
__version__ = "0.1.0"
