"""On-device learning on energy-harvesting nodes, simulated action by action."""

from .core import ActionKind, ContractViolation, GoalSpec, SystemState, Transition, transitions
from .energy import Capacitor, CostTable, HarvesterTrace, kmeans_costs, knn_costs
from .planner import ActionDecision, PlanConfig, Planner, plan
from .runtime import ActionProgram, NvStore, execute_action

__all__ = [
    "ActionDecision", "ActionKind", "ActionProgram", "Capacitor", "ContractViolation", "CostTable", "GoalSpec",
    "HarvesterTrace", "NvStore", "PlanConfig", "Planner", "SystemState", "Transition", "execute_action",
    "kmeans_costs", "knn_costs", "plan", "transitions",
]
