from .core import (
    HIST_SIZE,
    AllocationPlan,
    DelayHistogram,
    SimState,
    SliceMetrics,
    create_sim,
    delay_violation_rate,
    link_rate,
    step_interval,
)
from .kernel import KERNEL_BACKEND

__all__ = [
    "AllocationPlan",
    "DelayHistogram",
    "HIST_SIZE",
    "KERNEL_BACKEND",
    "SimState",
    "SliceMetrics",
    "create_sim",
    "delay_violation_rate",
    "link_rate",
    "step_interval",
]
