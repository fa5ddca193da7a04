"""Anticipatory on-demand ridepooling: simulation engine and experiment harness."""

__version__ = "0.1.0"

from .network import RoadNetwork, load_network, cluster_zones
from .demand import Request, DemandTrace, DemandProfile, load_trace, generate_synthetic
from .fleet import Vehicle, Stop
from .routing import Constraints, CostParams, RoutedMatch, best_route
from .matching import enumerate_candidates, solve_assignment, rebalance
from .engine import SimConfig, Simulation, RunReport, run_simulation

__all__ = [
    "RoadNetwork", "load_network", "cluster_zones",
    "Request", "DemandTrace", "DemandProfile", "load_trace", "generate_synthetic",
    "Vehicle", "Stop",
    "Constraints", "CostParams", "RoutedMatch", "best_route",
    "enumerate_candidates", "solve_assignment", "rebalance",
    "SimConfig", "Simulation", "RunReport", "run_simulation",
]
