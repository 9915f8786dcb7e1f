"""Indoor wireless network planning on 2D floor plans.

Core modules: ``geometry`` (plans, walls, validation), ``propagation``
(multi-wall pathloss and coverage grids), ``optimizers`` (the planning loop,
greedy/ACO/annealing baselines and a brute-force oracle), ``llm`` (the
chat-endpoint proposer) and ``agents`` (joint layout and AP design).
"""

from .geometry import (
    ArchitecturalRules,
    Boundary,
    FloorPlan,
    InvalidPlan,
    Material,
    Opening,
    PlanFormatError,
    Point2D,
    Room,
    Wall,
    check_circulation,
    load_plan,
    loads_plan,
    save_plan,
    validate_plan,
)
from .optimizers import OptimizationTrace, PlanningTask, optimize_loop
from .propagation import CoverageGrid, Deployment, RadioConfig, compute_grid, coverage_fraction, pathloss

__version__ = "0.1.0"

__all__ = [
    "ArchitecturalRules",
    "Boundary",
    "CoverageGrid",
    "Deployment",
    "FloorPlan",
    "InvalidPlan",
    "Material",
    "Opening",
    "OptimizationTrace",
    "PlanFormatError",
    "PlanningTask",
    "Point2D",
    "RadioConfig",
    "Room",
    "Wall",
    "check_circulation",
    "compute_grid",
    "coverage_fraction",
    "load_plan",
    "loads_plan",
    "optimize_loop",
    "pathloss",
    "save_plan",
    "validate_plan",
]
