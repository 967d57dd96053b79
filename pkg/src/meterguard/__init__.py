"""Privacy-aware smart meter energy management.

Solves the trade-off between information leaked through metered grid
purchases and the energy bought, for a household with a finite battery and a
fully-recharging renewable source: an average-cost belief DP, a finite-horizon
battery-only solver, two low-complexity policies, a clairvoyant lower bound,
an exact small-horizon leakage oracle, and a seeded simulator.
"""

from .belief import (
    ActionRule,
    Belief,
    BeliefGrid,
    belief_update,
    grid_for,
    per_step_cost,
    per_step_leakage,
    weighted_step_objective,
)
from .bound import BoundResult, interval_pmf, lower_bound, worst_case_objective
from .model import (
    JointState,
    Model,
    RenewableRealization,
    SystemConfig,
    battery_update,
    feasible_purchases,
)
from .policies import (
    BatteryConditionedPolicy,
    ThresholdPolicy,
    bcp_evaluate,
    bcp_search,
    bcp_to_action_rule,
    threshold_policy,
    tp_evaluate,
    tp_optimize,
)
from .sim import EvalResult, simulate, simulate_episodic
from .solver_finite import DepthTable, FiniteHorizonSolution, evaluate_finite_policy, finite_dp
from .solver_infinite import (
    StationaryPolicy,
    ValueTable,
    evaluate_stationary,
    relative_value_iteration,
)

__all__ = [
    "ActionRule",
    "BatteryConditionedPolicy",
    "Belief",
    "BeliefGrid",
    "BoundResult",
    "DepthTable",
    "EvalResult",
    "FiniteHorizonSolution",
    "JointState",
    "Model",
    "RenewableRealization",
    "StationaryPolicy",
    "SystemConfig",
    "ThresholdPolicy",
    "ValueTable",
    "battery_update",
    "bcp_evaluate",
    "bcp_search",
    "bcp_to_action_rule",
    "belief_update",
    "evaluate_finite_policy",
    "evaluate_stationary",
    "feasible_purchases",
    "finite_dp",
    "grid_for",
    "interval_pmf",
    "lower_bound",
    "per_step_cost",
    "per_step_leakage",
    "relative_value_iteration",
    "simulate",
    "simulate_episodic",
    "threshold_policy",
    "tp_evaluate",
    "tp_optimize",
    "weighted_step_objective",
    "worst_case_objective",
]
