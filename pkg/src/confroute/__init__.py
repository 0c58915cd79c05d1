"""Planning and simulation of media-processor placement and WAN/Internet
routing for conferencing calls."""

from __future__ import annotations

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CallConfig,
    CallRecord,
    MediaType,
    ReducedCallConfig,
    ResourceModel,
    Route,
    Topology,
    compute_used,
    group_configs,
    link_load,
    max_e2e_latency,
    network_used,
    reduce_config,
)
from .planner import Plan, PlanningProblem, build_lp, solve_problem, validate_plan  # noqa: E402

__all__ = [
    "CallConfig",
    "CallRecord",
    "MediaType",
    "Plan",
    "PlanningProblem",
    "ReducedCallConfig",
    "ResourceModel",
    "Route",
    "Topology",
    "build_lp",
    "compute_used",
    "group_configs",
    "link_load",
    "max_e2e_latency",
    "network_used",
    "reduce_config",
    "solve_problem",
    "validate_plan",
]
