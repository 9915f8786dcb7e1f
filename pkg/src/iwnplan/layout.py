"""Assemble wall/opening geometry from rectangular rooms.

Room edges on the outer boundary are dropped (the exterior walls already
cover them) and collinear interior edges are merged, so two abutting rooms
share one partition instead of stacking two.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import (
    TOL,
    ArchitecturalRules,
    Boundary,
    FloorPlan,
    Material,
    Opening,
    Point2D,
    Room,
    Wall,
    rect_walls,
)

SIDES = ("S", "E", "N", "W")


@dataclass(frozen=True)
class DoorSpec:
    """A door on one side of a room, centred at ``center`` along that side."""

    room: str
    side: str  # S | E | N | W
    center: float  # absolute x for S/N sides, absolute y for E/W sides
    width: float = 0.8
    material: str = "wood"


@dataclass(frozen=True)
class OuterDoorSpec:
    side: str = "W"
    center: float | None = None  # defaults to the middle of that side
    width: float = 1.0
    material: str = "wood"


def _edge_line(room: Room, side: str) -> tuple[str, float, float, float]:
    """(orientation, fixed coordinate, lo, hi) of one room side."""
    x0, y0, x1, y1 = room.origin.x, room.origin.y, room.x1, room.y1
    return {
        "S": ("h", y0, x0, x1),
        "N": ("h", y1, x0, x1),
        "W": ("v", x0, y0, y1),
        "E": ("v", x1, y0, y1),
    }[side]


def _on_boundary(orient: str, coord: float, b: Boundary) -> bool:
    if orient == "h":
        return abs(coord - b.origin.y) <= TOL or abs(coord - b.y1) <= TOL
    return abs(coord - b.origin.x) <= TOL or abs(coord - b.x1) <= TOL


def _merge(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1] + TOL:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def interior_wall_lines(rooms: tuple[Room, ...], boundary: Boundary) -> list[tuple[str, float, float, float]]:
    lines: dict[tuple[str, float], list[tuple[float, float]]] = {}
    for r in rooms:
        for side in SIDES:
            orient, coord, lo, hi = _edge_line(r, side)
            if _on_boundary(orient, coord, boundary):
                continue
            key = (orient, round(coord, 9))
            lines.setdefault(key, []).append((lo, hi))
    out = []
    for (orient, coord), ivs in sorted(lines.items()):
        for lo, hi in _merge(ivs):
            out.append((orient, coord, lo, hi))
    return out


def _segment(orient: str, coord: float, lo: float, hi: float) -> tuple[Point2D, Point2D]:
    if orient == "h":
        return Point2D(lo, coord), Point2D(hi, coord)
    return Point2D(coord, lo), Point2D(coord, hi)


def assemble_plan(
    boundary: Boundary,
    rooms: tuple[Room, ...],
    doors: tuple[DoorSpec, ...] = (),
    outer_door: OuterDoorSpec | None = OuterDoorSpec(),
    materials: dict[str, Material] | None = None,
    exterior: str = "concrete",
    partition: str = "brick",
    extra_walls: tuple[Wall, ...] = (),
    extra_openings: tuple[tuple[int, float, float, str, str], ...] = (),
    rules: ArchitecturalRules | None = None,
) -> FloorPlan:
    """Build a FloorPlan: exterior walls first, then merged room partitions.

    ``extra_openings`` are ``(wall index, offset, width, kind, material)``
    tuples addressing the final wall list.
    """
    from .geometry import default_materials

    materials = materials or default_materials()
    walls: list[Wall] = rect_walls(boundary, exterior)
    lines = interior_wall_lines(rooms, boundary)
    for orient, coord, lo, hi in lines:
        a, b = _segment(orient, coord, lo, hi)
        walls.append(Wall(a, b, partition, 0.15))
    walls.extend(extra_walls)

    openings: list[Opening] = []
    if outer_door is not None:
        side_idx = SIDES.index(outer_door.side)
        along = boundary.depth if outer_door.side in "EW" else boundary.width
        start = boundary.origin.y if outer_door.side in "EW" else boundary.origin.x
        center = start + along / 2 if outer_door.center is None else outer_door.center
        offset = (center - start) - outer_door.width / 2
        openings.append(Opening(side_idx, offset, outer_door.width, "door", outer_door.material))

    by_label = {r.label: r for r in rooms}
    for d in doors:
        orient, coord, _, _ = _edge_line(by_label[d.room], d.side)
        lo, hi = d.center - d.width / 2, d.center + d.width / 2
        host = _host_wall(walls, orient, coord, lo, hi)
        ws = walls[host].start
        offset = (lo - ws.x) if orient == "h" else (lo - ws.y)
        openings.append(Opening(host, offset, d.width, "door", d.material))
    for wi, off, width, kind, mat in extra_openings:
        openings.append(Opening(wi, off, width, kind, mat))
    return FloorPlan(boundary, materials, tuple(walls), tuple(openings), tuple(rooms), rules)


def _host_wall(walls: list[Wall], orient: str, coord: float, lo: float, hi: float) -> int:
    for i, w in enumerate(walls):
        if orient == "h" and abs(w.start.y - coord) <= TOL and abs(w.end.y - coord) <= TOL:
            a, b = sorted((w.start.x, w.end.x))
        elif orient == "v" and abs(w.start.x - coord) <= TOL and abs(w.end.x - coord) <= TOL:
            a, b = sorted((w.start.y, w.end.y))
        else:
            continue
        if a - TOL <= lo and hi <= b + TOL:
            return i
    raise ValueError(f"no wall hosts a door at {orient}={coord:g} [{lo:g}, {hi:g}]")
