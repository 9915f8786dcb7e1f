"""Reference plans and tasks shipped with the package.

None of these reproduce a published floor plan; they are documented
stand-ins sized like the two case studies:

* ``reference_office_plan`` - 20 x 10 m office, outer door centred on the
  west (10 m) wall, four 4 x 3 m rooms with 0.8 m wooden doors placed mid-way
  along the long walls. It is the fixed "pre-existing" baseline layout.
* ``reference_complex_plan`` - 90 x 12 m office wing: a 2 m central corridor
  with brick walls, 18 offices of 5 x 5 m on each side separated by
  concrete, every office with a 0.9 m wooden door and a glass window on the
  corridor.
* ``empty_room_plan`` - a bare rectangle used for oracle comparisons.
"""

from __future__ import annotations

from .geometry import (
    ArchitecturalRules,
    Boundary,
    FloorPlan,
    Opening,
    Point2D,
    Room,
    Wall,
    default_materials,
    rect_walls,
)
from .layout import DoorSpec, OuterDoorSpec, assemble_plan
from .optimizers import PlanningTask
from .propagation import RadioConfig

OFFICE_RULES = ArchitecturalRules(
    room_sizes=((4.0, 3.0),) * 4,
    door_width=0.8,
    door_material="wood",
)

# in-building obstructed propagation, upper textbook range (exponent 4 to 6)
CASE1_RADIO = RadioConfig(frequency=2400.0, reference_pathloss=40.05, reference_distance=1.0, pathloss_exponent=5.0)
# typical office exponent with brick partitions
CASE2_RADIO = RadioConfig(frequency=2400.0, reference_pathloss=40.05, reference_distance=1.0, pathloss_exponent=3.0)
BENCH_RADIO = RadioConfig()


def office_boundary() -> Boundary:
    return Boundary(Point2D(0.0, 0.0), 20.0, 10.0)


def reference_office_plan() -> FloorPlan:
    rooms = (
        Room(Point2D(3.0, 0.0), 4.0, 3.0, "A"),
        Room(Point2D(13.0, 0.0), 4.0, 3.0, "B"),
        Room(Point2D(3.0, 7.0), 4.0, 3.0, "C"),
        Room(Point2D(13.0, 7.0), 4.0, 3.0, "D"),
    )
    doors = (
        DoorSpec("A", "N", 5.0),
        DoorSpec("B", "N", 15.0),
        DoorSpec("C", "S", 5.0),
        DoorSpec("D", "S", 15.0),
    )
    return assemble_plan(
        office_boundary(),
        rooms,
        doors,
        OuterDoorSpec("W", None, 1.0, "wood"),
        partition="brick",
        rules=OFFICE_RULES,
    )


def reference_complex_plan(
    length: float = 90.0, depth: float = 12.0, office_width: float = 5.0, corridor: float = 2.0
) -> FloorPlan:
    b = Boundary(Point2D(0.0, 0.0), length, depth)
    walls = rect_walls(b, "concrete")
    y0 = (depth - corridor) / 2
    y1 = y0 + corridor
    walls.append(Wall(Point2D(0.0, y0), Point2D(length, y0), "brick", 0.15))  # 4
    walls.append(Wall(Point2D(0.0, y1), Point2D(length, y1), "brick", 0.15))  # 5
    n = int(round(length / office_width))
    openings = [Opening(3, depth / 2 - 0.6, 1.2, "door", "wood")]
    for i in range(n):
        x = i * office_width
        for host in (4, 5):
            openings.append(Opening(host, x + 0.4, 0.9, "door", "wood"))
            openings.append(Opening(host, x + 1.8, office_width - 2.6, "window", "glass"))
    for i in range(1, n):
        x = i * office_width
        walls.append(Wall(Point2D(x, 0.0), Point2D(x, y0), "concrete", 0.2))
        walls.append(Wall(Point2D(x, y1), Point2D(x, depth), "concrete", 0.2))
    return FloorPlan(b, default_materials(), tuple(walls), tuple(openings), ())


def empty_room_plan(width: float = 20.0, depth: float = 10.0) -> FloorPlan:
    b = Boundary(Point2D(0.0, 0.0), width, depth)
    return FloorPlan(b, default_materials(), tuple(rect_walls(b, "concrete")), (), ())


def case1_task(max_iterations: int = 10) -> PlanningTask:
    return PlanningTask(
        reference_complex_plan(),
        coverage_target=0.95,
        threshold=110.0,
        max_aps=5,
        max_iterations=max_iterations,
        cell_size=0.5,
        radio=CASE1_RADIO,
    )


def empty_room_task(max_iterations: int = 200, threshold: float = 58.0) -> PlanningTask:
    """One AP in a bare 20 x 10 m room; no position reaches full coverage."""
    return PlanningTask(
        empty_room_plan(),
        coverage_target=1.0,
        threshold=threshold,
        max_aps=1,
        max_iterations=max_iterations,
        cell_size=0.25,
        radio=BENCH_RADIO,
    )


def office_task(plan: FloorPlan | None = None, max_aps: int = 4, max_iterations: int = 10) -> PlanningTask:
    return PlanningTask(
        plan or reference_office_plan(),
        coverage_target=0.95,
        threshold=80.0,
        max_aps=max_aps,
        max_iterations=max_iterations,
        cell_size=0.25,
        radio=CASE2_RADIO,
    )
