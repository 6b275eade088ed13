"""High-PV scenario projection: block partition, PV expansion MILP, displacement
scenarios and reduced-order frequency response."""

__version__ = "0.1.0"

from .blocks import BlockSchedule, TimeBlock, partition_blocks
from .data import PlanningCase, load_case_bundle, validate_case, write_case_bundle
from .dynamics import Disturbance, SimConfig, compare_metrics, compute_metrics, flat_run, simulate_contingency
from .expansion import audit_solution, build_discount_schedule, build_expansion_lp, plan_expansion
from .milp import solve_milp
from .scenario import DynamicCase, PenetrationTarget, ScenarioError, build_dynamic_case, select_block
from .simplex import SolverOptions, solve_lp

__all__ = [
    "BlockSchedule", "TimeBlock", "partition_blocks",
    "PlanningCase", "load_case_bundle", "validate_case", "write_case_bundle",
    "Disturbance", "SimConfig", "compare_metrics", "compute_metrics", "flat_run", "simulate_contingency",
    "audit_solution", "build_discount_schedule", "build_expansion_lp", "plan_expansion",
    "solve_milp",
    "DynamicCase", "PenetrationTarget", "ScenarioError", "build_dynamic_case", "select_block",
    "SolverOptions", "solve_lp",
]
