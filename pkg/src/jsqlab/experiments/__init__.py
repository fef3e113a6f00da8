"""Steady-state, hitting-time, drift and designated-queue experiments."""
from .compare import WorkloadComparison, workload_comparison
from .drift import DriftReport, drift_audit
from .hitting import HittingResult, HorizonExceeded, estimate_hitting_time, loaded_state
from .section7 import (
    DeskInfeasible,
    LadderResult,
    Section7Network,
    Section7Params,
    StrictViolation,
    build_section7_spec,
    ladder_stats,
)
from .stats import Interval, Unstable
from .tails import TailEstimate, estimate_tail
