"""Discrete-event simulation of the network process."""
from .core import (
    EventBudgetExceeded,
    EventRecord,
    InitialJob,
    InvalidInitialState,
    Job,
    RunResult,
    SimState,
    Simulator,
    apply_event,
    assign_arriving_job,
    assign_efforts,
    init_state,
    next_event,
    project,
    run,
    snapshot,
)
from .metrics import TimeAverages
from .driver import make_simulator, simulate
from .fast import FastPathUnavailable, FastSimulator, fast_path_reason, supports
