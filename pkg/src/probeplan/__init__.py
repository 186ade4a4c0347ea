"""Telemetry planning toolkit: traffic forecasting, high-load switch
identification, biconnected subnetwork pruning, and probe path planning."""

from .netgraph import Path, Topology, load_topology, shortest_path, validate
from .pruning import Subnetwork, prune
from .planner import PlannerConfig, ProbePlan

__all__ = [
    "Path",
    "PlannerConfig",
    "ProbePlan",
    "Subnetwork",
    "Topology",
    "load_topology",
    "prune",
    "shortest_path",
    "validate",
]

__version__ = "0.1.0"
