"""Floor-plan data model, 2D segment geometry, plan validation and circulation.

Walls are zero-thickness segments; ``thickness`` is carried as metadata only.
Rooms are axis-aligned rectangles. All types are frozen dataclasses and every
function in this module is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

TOL = 1e-6


class PlanFormatError(ValueError):
    """A plan document could not be parsed into a FloorPlan."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class InvalidPlan(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Point2D:
    x: float
    y: float

    def __iter__(self):
        yield self.x
        yield self.y

    def dist(self, other: Point2D) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


Segment = tuple[Point2D, Point2D]


@dataclass(frozen=True)
class Material:
    name: str
    attenuation: float  # dB per crossing


@dataclass(frozen=True)
class Wall:
    start: Point2D
    end: Point2D
    material: str
    thickness: float = 0.2

    @property
    def length(self) -> float:
        return self.start.dist(self.end)

    @property
    def segment(self) -> Segment:
        return (self.start, self.end)

    def point_at(self, offset: float) -> Point2D:
        t = offset / self.length
        return Point2D(
            self.start.x + t * (self.end.x - self.start.x),
            self.start.y + t * (self.end.y - self.start.y),
        )


@dataclass(frozen=True)
class Opening:
    host_wall: int  # index into FloorPlan.walls
    offset: float
    width: float
    kind: str  # "door" | "window"
    material: str


@dataclass(frozen=True)
class Room:
    origin: Point2D
    width: float
    depth: float
    label: str

    @property
    def x1(self) -> float:
        return self.origin.x + self.width

    @property
    def y1(self) -> float:
        return self.origin.y + self.depth

    @property
    def center(self) -> Point2D:
        return Point2D(self.origin.x + self.width / 2, self.origin.y + self.depth / 2)

    def edges(self) -> list[Segment]:
        """Edges in the order south, east, north, west."""
        x0, y0, x1, y1 = self.origin.x, self.origin.y, self.x1, self.y1
        return [
            (Point2D(x0, y0), Point2D(x1, y0)),
            (Point2D(x1, y0), Point2D(x1, y1)),
            (Point2D(x0, y1), Point2D(x1, y1)),
            (Point2D(x0, y0), Point2D(x0, y1)),
        ]


@dataclass(frozen=True)
class Boundary:
    origin: Point2D
    width: float
    depth: float

    @property
    def x1(self) -> float:
        return self.origin.x + self.width

    @property
    def y1(self) -> float:
        return self.origin.y + self.depth

    @property
    def centroid(self) -> Point2D:
        return Point2D(self.origin.x + self.width / 2, self.origin.y + self.depth / 2)

    def edges(self) -> list[Segment]:
        return Room(self.origin, self.width, self.depth, "").edges()

    def contains(self, p: Point2D, tol: float = TOL) -> bool:
        return (
            self.origin.x - tol <= p.x <= self.x1 + tol
            and self.origin.y - tol <= p.y <= self.y1 + tol
        )


@dataclass(frozen=True)
class ArchitecturalRules:
    """Task-level layout rules checked by :func:`validate_plan`.

    ``room_sizes`` is a multiset of (width, depth); rotated rooms match when
    ``allow_rotation`` is set. ``None`` disables the corresponding check.
    """

    room_sizes: tuple[tuple[float, float], ...] | None = None
    door_width: float | None = None
    door_material: str | None = None
    require_anchor: bool = True
    require_circulation: bool = True
    allow_rotation: bool = True
    circulation_step: float = 0.1

    def without_doors(self) -> ArchitecturalRules:
        return replace(self, door_width=None, door_material=None, require_circulation=False)


@dataclass(frozen=True)
class FloorPlan:
    boundary: Boundary
    materials: dict[str, Material]
    walls: tuple[Wall, ...] = ()
    openings: tuple[Opening, ...] = ()
    rooms: tuple[Room, ...] = ()
    rules: ArchitecturalRules | None = None

    def __hash__(self) -> int:
        return hash(plan_to_json(self))

    def attenuation(self, material: str) -> float:
        return self.materials[material].attenuation

    def openings_on(self, wall_index: int) -> list[Opening]:
        return [o for o in self.openings if o.host_wall == wall_index]

    def opening_segment(self, opening: Opening) -> Segment:
        wall = self.walls[opening.host_wall]
        return (wall.point_at(opening.offset), wall.point_at(opening.offset + opening.width))


# ---------------------------------------------------------------------------
# segment primitives


def _cross(ox: float, oy: float, ax: float, ay: float, bx: float, by: float) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _canonical(s: Segment) -> Segment:
    p, q = s
    return (p, q) if (p.x, p.y) <= (q.x, q.y) else (q, p)


def segment_intersect(a: Segment, b: Segment) -> Point2D | None:
    """Return the interior crossing point of two segments, or None.

    Only proper crossings count: touching at an endpoint, parallel segments
    and collinear overlap all return None. Orientation tests run against
    each segment's lexicographically first endpoint, so the decision does
    not depend on argument order or segment direction.
    """
    (p1, p2), (q1, q2) = a, b
    (P1, P2), (Q1, Q2) = _canonical(a), _canonical(b)
    d1 = _cross(Q1.x, Q1.y, Q2.x, Q2.y, p1.x, p1.y)
    d2 = _cross(Q1.x, Q1.y, Q2.x, Q2.y, p2.x, p2.y)
    d3 = _cross(P1.x, P1.y, P2.x, P2.y, q1.x, q1.y)
    d4 = _cross(P1.x, P1.y, P2.x, P2.y, q2.x, q2.y)
    if not (d1 * d2 < 0 and d3 * d4 < 0):
        return None
    t = d1 / (d1 - d2)
    return Point2D(p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y))


def point_segment_distance(p: Point2D, seg: Segment) -> float:
    a, b = seg
    dx, dy = b.x - a.x, b.y - a.y
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((p.x - a.x) * dx + (p.y - a.y) * dy) / denom))
    return math.hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy))


def _segment_touches_box(seg: Segment, x0: float, y0: float, x1: float, y1: float) -> bool:
    # Liang-Barsky clip against a closed box
    (a, b) = seg
    dx, dy = b.x - a.x, b.y - a.y
    lo, hi = 0.0, 1.0
    for p, q in ((-dx, a.x - x0), (dx, x1 - a.x), (-dy, a.y - y0), (dy, y1 - a.y)):
        if p == 0:
            if q < 0:
                return False
            continue
        r = q / p
        if p < 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
        if lo > hi:
            return False
    return True


def _collinear_within(inner: Segment, outer: Segment, tol: float = TOL) -> bool:
    """True if ``inner`` lies on the line of ``outer`` and inside its extent."""
    return all(point_segment_distance(p, outer) <= tol for p in inner)


# ---------------------------------------------------------------------------
# wall crossings


@dataclass(frozen=True)
class Crossing:
    wall: int
    point: Point2D
    material: str
    distance: float  # from the path's first endpoint


def effective_material(plan: FloorPlan, wall_index: int, point: Point2D) -> str:
    wall = plan.walls[wall_index]
    s = wall.start.dist(point)
    for o in plan.openings_on(wall_index):
        if o.offset <= s <= o.offset + o.width:
            return o.material
    return wall.material


def _crossings_for(path: Segment, plan: FloorPlan, candidates: Iterable[int]) -> list[Crossing]:
    out = []
    for i in candidates:
        p = segment_intersect(path, plan.walls[i].segment)
        if p is not None:
            out.append(Crossing(i, p, effective_material(plan, i, p), path[0].dist(p)))
    out.sort(key=lambda c: (c.distance, c.wall))
    return out


def wall_crossings(path: Segment, plan: FloorPlan, index: SpatialIndex | None = None) -> list[Crossing]:
    """Walls properly crossed by ``path``, nearest first.

    A crossing inside an opening's span reports the opening's material.
    With ``index`` the candidate walls come from the spatial index; the
    result is identical to the all-walls scan.
    """
    candidates = range(len(plan.walls)) if index is None else index.candidates(path)
    return _crossings_for(path, plan, candidates)


@dataclass(frozen=True)
class SpatialIndex:
    """Uniform grid of bins over the plan boundary listing overlapping walls."""

    origin: Point2D
    bin_size: float
    ncols: int
    nrows: int
    bins: tuple[tuple[int, ...], ...]  # row-major, nrows * ncols

    def bin(self, col: int, row: int) -> tuple[int, ...]:
        return self.bins[row * self.ncols + col]

    def _bin_range(self, seg: Segment) -> tuple[int, int, int, int]:
        xs = [(p.x - self.origin.x) / self.bin_size for p in seg]
        ys = [(p.y - self.origin.y) / self.bin_size for p in seg]
        c0 = min(max(math.floor(min(xs)) - 1, 0), self.ncols - 1)
        c1 = min(max(math.floor(max(xs)) + 1, 0), self.ncols - 1)
        r0 = min(max(math.floor(min(ys)) - 1, 0), self.nrows - 1)
        r1 = min(max(math.floor(max(ys)) + 1, 0), self.nrows - 1)
        return c0, c1, r0, r1

    def _box(self, col: int, row: int) -> tuple[float, float, float, float]:
        e = TOL
        x0 = self.origin.x + col * self.bin_size
        y0 = self.origin.y + row * self.bin_size
        # outermost bins extend to infinity so nothing near the boundary is lost
        return (
            -math.inf if col == 0 else x0 - e,
            -math.inf if row == 0 else y0 - e,
            math.inf if col == self.ncols - 1 else x0 + self.bin_size + e,
            math.inf if row == self.nrows - 1 else y0 + self.bin_size + e,
        )

    def cells_touching(self, seg: Segment) -> list[tuple[int, int]]:
        c0, c1, r0, r1 = self._bin_range(seg)
        return [
            (c, r)
            for r in range(r0, r1 + 1)
            for c in range(c0, c1 + 1)
            if _segment_touches_box(seg, *self._box(c, r))
        ]

    def candidates(self, path: Segment) -> list[int]:
        found: set[int] = set()
        for c, r in self.cells_touching(path):
            found.update(self.bin(c, r))
        return sorted(found)


def build_spatial_index(plan: FloorPlan, bin_size: float) -> SpatialIndex:
    if bin_size <= 0:
        raise ValueError("bin_size must be positive")
    b = plan.boundary
    ncols = max(1, math.ceil(b.width / bin_size - 1e-9))
    nrows = max(1, math.ceil(b.depth / bin_size - 1e-9))
    bins: list[list[int]] = [[] for _ in range(ncols * nrows)]
    skeleton = SpatialIndex(b.origin, bin_size, ncols, nrows, ())
    for i, wall in enumerate(plan.walls):
        for c, r in skeleton.cells_touching(wall.segment):
            bins[r * ncols + c].append(i)
    return replace(skeleton, bins=tuple(tuple(v) for v in bins))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def _finite(*vals: float) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals)


def _type_violations(plan: FloorPlan) -> list[Violation]:
    out: list[Violation] = []
    b = plan.boundary
    if not _finite(b.origin.x, b.origin.y, b.width, b.depth):
        out.append(Violation("NonFiniteCoordinate", "boundary"))
    elif b.width <= 0 or b.depth <= 0:
        out.append(Violation("DegenerateBoundary", f"boundary {b.width}x{b.depth}"))
    for key, m in plan.materials.items():
        if not m.name or key != m.name:
            out.append(Violation("MaterialName", f"material key {key!r} has name {m.name!r}"))
        if not _finite(m.attenuation) or m.attenuation < 0:
            out.append(Violation("NegativeAttenuation", f"material {m.name!r}: {m.attenuation}"))
    for i, w in enumerate(plan.walls):
        if not _finite(w.start.x, w.start.y, w.end.x, w.end.y, w.thickness):
            out.append(Violation("NonFiniteCoordinate", f"wall {i}"))
            continue
        if w.length <= TOL:
            out.append(Violation("DegenerateWall", f"wall {i} has length {w.length:g}"))
        if w.thickness <= 0:
            out.append(Violation("WallThickness", f"wall {i} thickness {w.thickness:g}"))
        if w.material not in plan.materials:
            out.append(Violation("UnknownMaterial", f"wall {i} uses {w.material!r}"))
        if not (b.contains(w.start) and b.contains(w.end)):
            out.append(Violation("WallOutOfBounds", f"wall {i} leaves the boundary"))
    for j, o in enumerate(plan.openings):
        if o.kind not in ("door", "window"):
            out.append(Violation("OpeningKind", f"opening {j} kind {o.kind!r}"))
        if o.material not in plan.materials:
            out.append(Violation("UnknownMaterial", f"opening {j} uses {o.material!r}"))
        if not (0 <= o.host_wall < len(plan.walls)):
            out.append(Violation("OpeningHostMissing", f"opening {j} host wall {o.host_wall}"))
            continue
        if not _finite(o.offset, o.width) or o.width <= 0 or o.offset < 0:
            out.append(Violation("OpeningOutOfRange", f"opening {j} offset {o.offset} width {o.width}"))
        elif o.offset + o.width > plan.walls[o.host_wall].length + TOL:
            out.append(Violation("OpeningOutOfRange", f"opening {j} runs past the end of wall {o.host_wall}"))
    for r in plan.rooms:
        if not _finite(r.origin.x, r.origin.y, r.width, r.depth):
            out.append(Violation("NonFiniteCoordinate", f"room {r.label}"))
            continue
        if r.width <= 0 or r.depth <= 0:
            out.append(Violation("DegenerateRoom", f"room {r.label} is {r.width}x{r.depth}"))
        if not (b.contains(r.origin) and b.contains(Point2D(r.x1, r.y1))):
            out.append(Violation("RoomOutOfBounds", f"room {r.label} leaves the boundary"))
    labels = [r.label for r in plan.rooms]
    if len(set(labels)) != len(labels):
        out.append(Violation("DuplicateRoomLabel", "room labels are not unique"))
    return out


def rooms_overlap(a: Room, b: Room, tol: float = TOL) -> bool:
    return (
        min(a.x1, b.x1) - max(a.origin.x, b.origin.x) > tol
        and min(a.y1, b.y1) - max(a.origin.y, b.origin.y) > tol
    )


def room_is_anchored(plan: FloorPlan, room: Room) -> bool:
    return any(
        _collinear_within(edge, outer) for edge in room.edges() for outer in plan.boundary.edges()
    )


def doors_of_room(plan: FloorPlan, room: Room) -> list[int]:
    """Indices of door openings lying on one of the room's edges."""
    found = []
    for j, o in enumerate(plan.openings):
        if o.kind != "door" or not (0 <= o.host_wall < len(plan.walls)):
            continue
        seg = plan.opening_segment(o)
        if any(_collinear_within(seg, edge) for edge in room.edges()):
            found.append(j)
    return found


def outer_doors(plan: FloorPlan) -> list[int]:
    found = []
    for j, o in enumerate(plan.openings):
        if o.kind != "door" or not (0 <= o.host_wall < len(plan.walls)):
            continue
        seg = plan.opening_segment(o)
        if any(_collinear_within(seg, edge) for edge in plan.boundary.edges()):
            found.append(j)
    return found


def _sizes_match(rooms: Sequence[Room], required: Sequence[tuple[float, float]], rotate: bool) -> bool:
    remaining = list(required)
    for r in rooms:
        for k, (w, d) in enumerate(remaining):
            straight = abs(r.width - w) <= TOL and abs(r.depth - d) <= TOL
            turned = rotate and abs(r.width - d) <= TOL and abs(r.depth - w) <= TOL
            if straight or turned:
                del remaining[k]
                break
        else:
            return False
    return not remaining


def validate_plan(plan: FloorPlan, rules: ArchitecturalRules | None = None) -> list[Violation]:
    """Every violated invariant of ``plan``; an empty list means valid.

    ``rules`` defaults to the rule set attached to the plan, if any.
    """
    rules = plan.rules if rules is None else rules
    out = _type_violations(plan)
    for i, a in enumerate(plan.rooms):
        for b in plan.rooms[i + 1 :]:
            if rooms_overlap(a, b):
                out.append(Violation("RoomOverlapViolation", f"rooms {a.label} and {b.label} overlap"))
    if rules is None or any(v.kind in _STRUCTURAL for v in out):
        return out

    if rules.room_sizes is not None and not _sizes_match(plan.rooms, rules.room_sizes, rules.allow_rotation):
        sizes = ", ".join(f"{r.width:g}x{r.depth:g}" for r in plan.rooms)
        out.append(Violation("RoomSizeViolation", f"room sizes [{sizes}] do not match the required set"))
    if rules.require_anchor:
        for r in plan.rooms:
            if not room_is_anchored(plan, r):
                out.append(Violation("RoomAnchorViolation", f"room {r.label} has no edge on an outer wall"))
    if rules.door_width is not None:
        for r in plan.rooms:
            doors = doors_of_room(plan, r)
            if len(doors) != 1:
                out.append(Violation("DoorCountViolation", f"room {r.label} has {len(doors)} doors"))
            for j in doors:
                o = plan.openings[j]
                if abs(o.width - rules.door_width) > TOL:
                    out.append(
                        Violation(
                            "DoorWidthViolation",
                            f"room {r.label} door {j} is {o.width:g} m wide, rule requires {rules.door_width:g} m",
                        )
                    )
                if rules.door_material is not None and o.material != rules.door_material:
                    out.append(
                        Violation("DoorMaterialViolation", f"room {r.label} door {j} is {o.material!r}")
                    )
    if rules.require_circulation:
        if not outer_doors(plan):
            out.append(Violation("CirculationViolation", "plan has no outer door"))
        elif not check_circulation(plan, rules.circulation_step):
            out.append(Violation("CirculationViolation", "some room door is unreachable from the outer door"))
    return out


_STRUCTURAL = {
    "NonFiniteCoordinate",
    "DegenerateBoundary",
    "DegenerateWall",
    "DegenerateRoom",
    "OpeningHostMissing",
    "UnknownMaterial",
}


# ---------------------------------------------------------------------------
# circulation


def _blocked_moves(plan: FloorPlan, a: np.ndarray, b: np.ndarray, through: tuple[str, ...] = ("door",)) -> np.ndarray:
    """Mask of moves a[k]->b[k] crossing a wall outside openings of the ``through`` kinds."""
    blocked = np.zeros(len(a), dtype=bool)
    for i, w in enumerate(plan.walls):
        q1 = np.array([w.start.x, w.start.y])
        q2 = np.array([w.end.x, w.end.y])
        hit, s = _proper_hits(a, b, q1, q2)
        if not hit.any():
            continue
        passable = np.zeros_like(hit)
        for o in plan.openings_on(i):
            if o.kind in through:
                passable |= (s >= o.offset) & (s <= o.offset + o.width)
        blocked |= hit & ~passable
    return blocked


def _proper_hits(a: np.ndarray, b: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`segment_intersect` of many paths against one wall.

    Returns the crossing mask and the crossing offset along the wall.
    """
    # same canonical orientation as segment_intersect, so results match it exactly
    Q1, Q2 = (q1, q2) if (q1[0], q1[1]) <= (q2[0], q2[1]) else (q2, q1)
    ex, ey = Q2 - Q1
    d1 = ex * (a[:, 1] - Q1[1]) - ey * (a[:, 0] - Q1[0])
    d2 = ex * (b[:, 1] - Q1[1]) - ey * (b[:, 0] - Q1[0])
    first = (a[:, 0] < b[:, 0]) | ((a[:, 0] == b[:, 0]) & (a[:, 1] <= b[:, 1]))
    A = np.where(first[:, None], a, b)
    B = np.where(first[:, None], b, a)
    ux = B[:, 0] - A[:, 0]
    uy = B[:, 1] - A[:, 1]
    d3 = ux * (q1[1] - A[:, 1]) - uy * (q1[0] - A[:, 0])
    d4 = ux * (q2[1] - A[:, 1]) - uy * (q2[0] - A[:, 0])
    hit = (d1 * d2 < 0) & (d3 * d4 < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(hit, d1 / (d1 - d2), 0.0)
    cx = a[:, 0] + t * (b[:, 0] - a[:, 0])
    cy = a[:, 1] + t * (b[:, 1] - a[:, 1])
    s = np.hypot(cx - q1[0], cy - q1[1])
    return hit, s


def _door_probe(plan: FloorPlan, opening: Opening, side: int, step: float) -> Point2D:
    """A point just off the middle of a door, on one side of its wall."""
    wall = plan.walls[opening.host_wall]
    mid = wall.point_at(opening.offset + opening.width / 2)
    L = wall.length
    nx, ny = -(wall.end.y - wall.start.y) / L, (wall.end.x - wall.start.x) / L
    return Point2D(mid.x + side * nx * step * 0.75, mid.y + side * ny * step * 0.75)


def grid_adjacency(
    plan: FloorPlan, xs: np.ndarray, ys: np.ndarray, through: tuple[str, ...] = ("door",)
) -> tuple[np.ndarray, np.ndarray]:
    """4-neighbour links between cell centres that no wall separates.

    Cell ids are row-major over ``len(ys)`` rows and ``len(xs)`` columns.
    Returns the two endpoint arrays of every open link.
    """
    X, Y = np.meshgrid(xs, ys)
    ids = np.arange(X.size).reshape(X.shape)
    edges_u, edges_v = [], []
    for u, v, pa, pb in (
        (ids[:, :-1], ids[:, 1:], (X[:, :-1], Y[:, :-1]), (X[:, 1:], Y[:, 1:])),
        (ids[:-1, :], ids[1:, :], (X[:-1, :], Y[:-1, :]), (X[1:, :], Y[1:, :])),
    ):
        a = np.column_stack([pa[0].ravel(), pa[1].ravel()])
        c = np.column_stack([pb[0].ravel(), pb[1].ravel()])
        ok = ~_blocked_moves(plan, a, c, through)
        edges_u.append(u.ravel()[ok])
        edges_v.append(v.ravel()[ok])
    return np.concatenate(edges_u), np.concatenate(edges_v)


def check_circulation(plan: FloorPlan, grid_step: float = 0.1) -> bool:
    """Flood-fill connectivity from the outer door to every room's door.

    Cells are ``grid_step`` squares over the boundary; two neighbouring
    cells connect unless the segment between their centres crosses a wall
    away from a door opening. A room counts as reached when the cell just
    inside its door is connected to the cell just inside the outer door.
    """
    outers = outer_doors(plan)
    if not outers:
        raise InvalidPlan("plan has no outer door")
    b = plan.boundary
    ncols = max(1, round(b.width / grid_step))
    nrows = max(1, round(b.depth / grid_step))
    sx, sy = b.width / ncols, b.depth / nrows
    xs = b.origin.x + (np.arange(ncols) + 0.5) * sx
    ys = b.origin.y + (np.arange(nrows) + 0.5) * sy
    ids = np.arange(nrows * ncols).reshape(nrows, ncols)
    uu, vv = grid_adjacency(plan, xs, ys)
    n = nrows * ncols
    graph = coo_matrix((np.ones(len(uu), dtype=np.int8), (uu, vv)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)

    def cell_of(p: Point2D) -> int | None:
        if not b.contains(p, tol=0):
            return None
        c = min(int((p.x - b.origin.x) / sx), ncols - 1)
        r = min(int((p.y - b.origin.y) / sy), nrows - 1)
        return int(ids[r, c])

    start = None
    for j in outers:
        for side in (1, -1):
            cell = cell_of(_door_probe(plan, plan.openings[j], side, grid_step))
            if cell is not None:
                start = cell
                break
        if start is not None:
            break
    if start is None:
        return False

    for room in plan.rooms:
        doors = doors_of_room(plan, room)
        if not doors:
            return False
        reached = False
        for j in doors:
            for side in (1, -1):
                p = _door_probe(plan, plan.openings[j], side, grid_step)
                inside = room.origin.x < p.x < room.x1 and room.origin.y < p.y < room.y1
                cell = cell_of(p)
                if inside and cell is not None and labels[cell] == labels[start]:
                    reached = True
        if not reached:
            return False
    return True


# ---------------------------------------------------------------------------
# serialization


def plan_to_dict(plan: FloorPlan) -> dict[str, Any]:
    b = plan.boundary
    doc: dict[str, Any] = {
        "boundary": {"origin": [b.origin.x, b.origin.y], "width": b.width, "depth": b.depth},
        "materials": [{"name": m.name, "attenuation": m.attenuation} for m in plan.materials.values()],
        "walls": [
            {
                "start": [w.start.x, w.start.y],
                "end": [w.end.x, w.end.y],
                "material": w.material,
                "thickness": w.thickness,
            }
            for w in plan.walls
        ],
        "openings": [
            {"wall": o.host_wall, "offset": o.offset, "width": o.width, "kind": o.kind, "material": o.material}
            for o in plan.openings
        ],
        "rooms": [
            {"label": r.label, "origin": [r.origin.x, r.origin.y], "width": r.width, "depth": r.depth}
            for r in plan.rooms
        ],
    }
    if plan.rules is not None:
        doc["rules"] = rules_to_dict(plan.rules)
    return doc


def plan_to_json(plan: FloorPlan, indent: int | None = None) -> str:
    return json.dumps(plan_to_dict(plan), indent=indent, sort_keys=False)


def rules_to_dict(rules: ArchitecturalRules) -> dict[str, Any]:
    return {
        "room_sizes": None if rules.room_sizes is None else [list(s) for s in rules.room_sizes],
        "door_width": rules.door_width,
        "door_material": rules.door_material,
        "require_anchor": rules.require_anchor,
        "require_circulation": rules.require_circulation,
        "allow_rotation": rules.allow_rotation,
        "circulation_step": rules.circulation_step,
    }


class _Reader:
    """Field-addressed accessors used by the plan loader."""

    def __init__(self, strict: bool):
        self.strict = strict

    def num(self, obj: Any, key: str, where: str, *, positive: bool = False, nonneg: bool = False) -> float:
        if not isinstance(obj, dict) or key not in obj:
            raise PlanFormatError(where, f"missing field {key!r}")
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise PlanFormatError(f"{where}.{key}", f"expected a number, got {v!r}")
        v = float(v)
        if self.strict:
            if not math.isfinite(v):
                raise PlanFormatError(f"{where}.{key}", "must be finite")
            if positive and v <= 0:
                raise PlanFormatError(f"{where}.{key}", f"must be > 0, got {v:g}")
            if nonneg and v < 0:
                raise PlanFormatError(f"{where}.{key}", f"must be >= 0, got {v:g}")
        return v

    def point(self, obj: Any, key: str, where: str) -> Point2D:
        if not isinstance(obj, dict) or key not in obj:
            raise PlanFormatError(where, f"missing field {key!r}")
        v = obj[key]
        if isinstance(v, dict):
            return Point2D(self.num(v, "x", f"{where}.{key}"), self.num(v, "y", f"{where}.{key}"))
        if (
            not isinstance(v, (list, tuple))
            or len(v) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)
        ):
            raise PlanFormatError(f"{where}.{key}", f"expected [x, y], got {v!r}")
        p = Point2D(float(v[0]), float(v[1]))
        if self.strict and not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise PlanFormatError(f"{where}.{key}", "coordinates must be finite")
        return p

    def text(self, obj: Any, key: str, where: str) -> str:
        if not isinstance(obj, dict) or key not in obj:
            raise PlanFormatError(where, f"missing field {key!r}")
        v = obj[key]
        if not isinstance(v, str) or (self.strict and not v):
            raise PlanFormatError(f"{where}.{key}", f"expected a nonempty string, got {v!r}")
        return v

    def items(self, obj: dict, key: str) -> list:
        v = obj.get(key, [])
        if not isinstance(v, list):
            raise PlanFormatError(key, "expected a list")
        return v


def plan_from_dict(doc: Any, strict: bool = True) -> FloorPlan:
    """Build a FloorPlan from a parsed document.

    With ``strict`` every per-element type invariant is enforced and the
    first failure raises :class:`PlanFormatError` naming the offending
    field. Without it only the document shape is checked, leaving
    invariant checks to :func:`validate_plan`.
    """
    rd = _Reader(strict)
    if not isinstance(doc, dict):
        raise PlanFormatError("<root>", "expected an object")
    if "boundary" not in doc:
        raise PlanFormatError("<root>", "missing field 'boundary'")
    bd = doc["boundary"]
    boundary = Boundary(
        rd.point(bd, "origin", "boundary") if isinstance(bd, dict) and "origin" in bd else Point2D(0.0, 0.0),
        rd.num(bd, "width", "boundary", positive=True),
        rd.num(bd, "depth", "boundary", positive=True),
    )
    materials: dict[str, Material] = {}
    for i, m in enumerate(rd.items(doc, "materials")):
        where = f"materials[{i}]"
        name = rd.text(m, "name", where)
        if name in materials and strict:
            raise PlanFormatError(f"{where}.name", f"duplicate material {name!r}")
        materials[name] = Material(name, rd.num(m, "attenuation", where, nonneg=True))
    walls = []
    for i, w in enumerate(rd.items(doc, "walls")):
        where = f"walls[{i}]"
        wall = Wall(
            rd.point(w, "start", where),
            rd.point(w, "end", where),
            rd.text(w, "material", where),
            rd.num(w, "thickness", where, positive=True) if "thickness" in w else 0.2,
        )
        if strict:
            if wall.length <= TOL:
                raise PlanFormatError(where, "endpoints must be distinct")
            if wall.material not in materials:
                raise PlanFormatError(f"{where}.material", f"unknown material {wall.material!r}")
        walls.append(wall)
    openings = []
    for i, o in enumerate(rd.items(doc, "openings")):
        where = f"openings[{i}]"
        host = o.get("wall") if isinstance(o, dict) else None
        if isinstance(host, bool) or not isinstance(host, int):
            raise PlanFormatError(f"{where}.wall", f"expected a wall index, got {host!r}")
        op = Opening(
            host,
            rd.num(o, "offset", where, nonneg=True),
            rd.num(o, "width", where, positive=True),
            rd.text(o, "kind", where),
            rd.text(o, "material", where),
        )
        if strict:
            if not 0 <= host < len(walls):
                raise PlanFormatError(f"{where}.wall", f"no wall with index {host}")
            if op.kind not in ("door", "window"):
                raise PlanFormatError(f"{where}.kind", f"expected 'door' or 'window', got {op.kind!r}")
            if op.offset + op.width > walls[host].length + TOL:
                raise PlanFormatError(where, "offset + width exceeds the host wall length")
            if op.material not in materials:
                raise PlanFormatError(f"{where}.material", f"unknown material {op.material!r}")
        openings.append(op)
    rooms = []
    for i, r in enumerate(rd.items(doc, "rooms")):
        where = f"rooms[{i}]"
        rooms.append(
            Room(
                rd.point(r, "origin", where),
                rd.num(r, "width", where, positive=True),
                rd.num(r, "depth", where, positive=True),
                rd.text(r, "label", where) if "label" in r else f"room{i}",
            )
        )
    rules = None
    if doc.get("rules") is not None:
        rules = rules_from_dict(doc["rules"])
    return FloorPlan(boundary, materials, tuple(walls), tuple(openings), tuple(rooms), rules)


def rules_from_dict(doc: Any) -> ArchitecturalRules:
    if not isinstance(doc, dict):
        raise PlanFormatError("rules", "expected an object")
    sizes = doc.get("room_sizes")
    try:
        return ArchitecturalRules(
            room_sizes=None if sizes is None else tuple((float(w), float(d)) for w, d in sizes),
            door_width=None if doc.get("door_width") is None else float(doc["door_width"]),
            door_material=doc.get("door_material"),
            require_anchor=bool(doc.get("require_anchor", True)),
            require_circulation=bool(doc.get("require_circulation", True)),
            allow_rotation=bool(doc.get("allow_rotation", True)),
            circulation_step=float(doc.get("circulation_step", 0.1)),
        )
    except (TypeError, ValueError) as exc:
        raise PlanFormatError("rules", str(exc)) from exc


def loads_plan(text: str, strict: bool = True) -> FloorPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from exc
    return plan_from_dict(doc, strict=strict)


def load_plan(path: str | Path, strict: bool = True) -> FloorPlan:
    return loads_plan(Path(path).read_text(), strict=strict)


def save_plan(plan: FloorPlan, path: str | Path) -> None:
    Path(path).write_text(plan_to_json(plan, indent=2) + "\n")


# ---------------------------------------------------------------------------
# construction helpers


def rect_walls(boundary: Boundary, material: str, thickness: float = 0.3) -> list[Wall]:
    """The four outer walls of a boundary, south/east/north/west."""
    return [Wall(a, b, material, thickness) for a, b in boundary.edges()]


def mirror_plan_x(plan: FloorPlan) -> FloorPlan:
    """Mirror a plan about the vertical line through its boundary centre."""
    b = plan.boundary
    axis = b.origin.x + b.x1

    def m(p: Point2D) -> Point2D:
        return Point2D(axis - p.x, p.y)

    walls = tuple(replace(w, start=m(w.start), end=m(w.end)) for w in plan.walls)
    rooms = tuple(replace(r, origin=Point2D(axis - r.x1, r.origin.y)) for r in plan.rooms)
    return replace(plan, walls=walls, rooms=rooms)


def default_materials() -> dict[str, Material]:
    table = {
        "concrete": 12.0,
        "brick": 8.0,
        "drywall": 3.0,
        "glass": 2.0,
        "wood": 3.0,
    }
    return {k: Material(k, v) for k, v in table.items()}


__all__ = [
    "ArchitecturalRules",
    "Boundary",
    "Crossing",
    "FloorPlan",
    "InvalidPlan",
    "Material",
    "Opening",
    "PlanFormatError",
    "Point2D",
    "Room",
    "SpatialIndex",
    "Violation",
    "Wall",
    "build_spatial_index",
    "check_circulation",
    "default_materials",
    "load_plan",
    "loads_plan",
    "plan_from_dict",
    "plan_to_dict",
    "plan_to_json",
    "save_plan",
    "segment_intersect",
    "validate_plan",
    "wall_crossings",
]
