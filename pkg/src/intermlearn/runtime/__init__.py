from .execution import (
    PROGRESS_SLOT,
    ActionProgram,
    ExecutionOutcome,
    FaultInjector,
    NvStore,
    Status,
    SubStep,
    TraceExhausted,
    execute_action,
)

__all__ = [
    "PROGRESS_SLOT", "ActionProgram", "ExecutionOutcome", "FaultInjector", "NvStore", "Status", "SubStep",
    "TraceExhausted", "execute_action",
]
