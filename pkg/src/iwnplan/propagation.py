"""Multi-wall pathloss model, coverage grids and PPM heatmap export.

Pathloss follows the COST-231 multi-wall form::

    PL(d) = PL0 + 10 n log10(max(d, d0) / d0) + sum(attenuation of crossed walls)

where a crossing inside a door or window uses the opening's material.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    TOL,
    FloorPlan,
    Point2D,
    SpatialIndex,
    _proper_hits,
    point_segment_distance,
    wall_crossings,
)

AP_WALL_CLEARANCE = 1e-3


class InvalidDeployment(ValueError):
    pass


class InvalidGrid(ValueError):
    pass


class NoValidPosition(ValueError):
    pass


@dataclass(frozen=True)
class RadioConfig:
    frequency: float = 2400.0  # MHz
    reference_pathloss: float = 40.05  # dB at reference_distance
    reference_distance: float = 1.0  # m
    pathloss_exponent: float = 2.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if not self.reference_distance > 0:
            raise ValueError("reference_distance must be positive")
        if not self.pathloss_exponent >= 1:
            raise ValueError("pathloss_exponent must be >= 1")


@dataclass(frozen=True)
class Deployment:
    aps: tuple[Point2D, ...]
    config: RadioConfig = field(default_factory=RadioConfig)

    @classmethod
    def of(cls, *xy: tuple[float, float], config: RadioConfig | None = None) -> Deployment:
        return cls(tuple(Point2D(float(x), float(y)) for x, y in xy), config or RadioConfig())

    def as_list(self) -> list[list[float]]:
        return [[p.x, p.y] for p in self.aps]


@dataclass(frozen=True)
class CoverageGrid:
    origin: Point2D
    cell_size: float
    ncols: int
    nrows: int
    values: np.ndarray  # (nrows, ncols), row 0 at the southern edge

    def cell_center(self, row: int, col: int) -> Point2D:
        return Point2D(
            self.origin.x + (col + 0.5) * self.cell_size,
            self.origin.y + (row + 0.5) * self.cell_size,
        )

    def centers(self) -> np.ndarray:
        """(nrows * ncols, 2) array of cell centres, row-major."""
        xs = self.origin.x + (np.arange(self.ncols) + 0.5) * self.cell_size
        ys = self.origin.y + (np.arange(self.nrows) + 0.5) * self.cell_size
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class CoverageStats:
    coverage_fraction: float
    threshold: float
    covered_cells: int
    total_cells: int
    worst_cell: Point2D
    worst_pathloss: float

    def to_dict(self) -> dict:
        return {
            "coverage_fraction": self.coverage_fraction,
            "threshold": self.threshold,
            "covered_cells": self.covered_cells,
            "total_cells": self.total_cells,
            "worst_cell": [self.worst_cell.x, self.worst_cell.y],
            "worst_pathloss": self.worst_pathloss,
        }


def log_distance(d: float | np.ndarray, config: RadioConfig):
    d0 = config.reference_distance
    return config.reference_pathloss + 10.0 * config.pathloss_exponent * np.log10(np.maximum(d, d0) / d0)


def pathloss(tx: Point2D, rx: Point2D, plan: FloorPlan, config: RadioConfig, index: SpatialIndex | None = None) -> float:
    """Multi-wall pathloss in dB from ``tx`` to ``rx``."""
    base = float(log_distance(tx.dist(rx), config))
    # summing in wall order keeps this bit-identical to the vectorised grid path
    for c in sorted(wall_crossings((tx, rx), plan, index), key=lambda c: c.wall):
        base += plan.attenuation(c.material)
    return base


# ---------------------------------------------------------------------------
# deployment validity


def position_problem(plan: FloorPlan, p: Point2D, clearance: float = AP_WALL_CLEARANCE) -> str | None:
    """Why ``p`` cannot host an AP, or None if it can."""
    b = plan.boundary
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        return "non-finite position"
    if not (b.origin.x < p.x < b.x1 and b.origin.y < p.y < b.y1):
        return "outside boundary"
    for i, w in enumerate(plan.walls):
        if point_segment_distance(p, w.segment) <= clearance:
            return f"on wall {i}"
    return None


def deployment_problems(plan: FloorPlan, deployment: Deployment, max_aps: int | None = None) -> list[str]:
    out = []
    n = len(deployment.aps)
    if n < 1:
        out.append("deployment has no APs")
    if max_aps is not None and n > max_aps:
        out.append(f"{n} APs exceed the budget of {max_aps}")
    for k, p in enumerate(deployment.aps):
        why = position_problem(plan, p)
        if why is not None:
            out.append(f"ap {k} {why}")
    return out


def check_deployment(plan: FloorPlan, deployment: Deployment, max_aps: int | None = None) -> None:
    problems = deployment_problems(plan, deployment, max_aps)
    if problems:
        raise InvalidDeployment("; ".join(problems))


def nearest_valid_position(
    plan: FloorPlan, p: Point2D, clearance: float = 0.1, step: float = 0.05
) -> Point2D:
    """Nearest point of the local lattice ``p + step * (i, j)`` with clearance.

    A valid point lies inside the boundary and at least ``clearance`` from
    every wall and boundary edge. Ties go to the lexicographically smallest
    point. ``p`` itself is returned when it already qualifies.
    """
    b = plan.boundary

    c = clearance - 1e-9  # lattice points carry rounding error

    def ok(q: Point2D) -> bool:
        if not (b.origin.x + c <= q.x <= b.x1 - c and b.origin.y + c <= q.y <= b.y1 - c):
            return False
        return all(point_segment_distance(q, w.segment) >= c for w in plan.walls)

    if ok(p):
        return p
    reach = math.hypot(max(abs(p.x - b.origin.x), abs(p.x - b.x1)), max(abs(p.y - b.origin.y), abs(p.y - b.y1)))
    max_ring = int(math.ceil(reach / step)) + 1
    best: tuple[float, Point2D] | None = None
    for ring in range(1, max_ring + 1):
        # any point in a later ring is at least ring * step away
        if best is not None and best[0] < ring * step - 1e-12:
            break
        for i in range(-ring, ring + 1):
            for j in (-ring, ring) if abs(i) != ring else range(-ring, ring + 1):
                q = Point2D(p.x + i * step, p.y + j * step)
                if ok(q):
                    cand = (p.dist(q), q)
                    if best is None or cand < best:
                        best = cand
    if best is None:
        raise NoValidPosition(f"no valid AP position near ({p.x:g}, {p.y:g})")
    return best[1]


# ---------------------------------------------------------------------------
# coverage grid


def grid_shape(plan: FloorPlan, cell_size: float) -> tuple[int, int]:
    if not cell_size > 0:
        raise InvalidGrid("cell_size must be positive")
    b = plan.boundary
    ncols = round(b.width / cell_size)
    nrows = round(b.depth / cell_size)
    if ncols < 1 or nrows < 1 or abs(ncols * cell_size - b.width) > TOL or abs(nrows * cell_size - b.depth) > TOL:
        raise InvalidGrid(f"cell size {cell_size:g} does not tile a {b.width:g}x{b.depth:g} boundary")
    return ncols, nrows


def ap_field(plan: FloorPlan, ap: Point2D, config: RadioConfig, centers: np.ndarray) -> np.ndarray:
    """Pathloss from one AP to every point in ``centers`` (all walls scanned)."""
    d = np.hypot(centers[:, 0] - ap.x, centers[:, 1] - ap.y)
    values = log_distance(d, config)
    a = np.broadcast_to(np.array([ap.x, ap.y]), centers.shape)
    for i, w in enumerate(plan.walls):
        hit, s = _proper_hits(a, centers, np.array([w.start.x, w.start.y]), np.array([w.end.x, w.end.y]))
        if not hit.any():
            continue
        att = np.full(len(centers), plan.attenuation(w.material))
        # reversed so the first listed opening wins, as in effective_material
        for o in reversed(plan.openings_on(i)):
            inside = (s >= o.offset) & (s <= o.offset + o.width)
            att = np.where(inside, plan.attenuation(o.material), att)
        values = values + np.where(hit, att, 0.0)
    return values


def _ap_field_indexed(plan: FloorPlan, ap: Point2D, config: RadioConfig, centers: np.ndarray, index: SpatialIndex) -> np.ndarray:
    d = np.hypot(centers[:, 0] - ap.x, centers[:, 1] - ap.y)
    values = log_distance(d, config)
    out = np.empty(len(centers))
    for k, (x, y) in enumerate(centers):
        v = float(values[k])
        for c in sorted(wall_crossings((ap, Point2D(float(x), float(y))), plan, index), key=lambda c: c.wall):
            v += plan.attenuation(c.material)
        out[k] = v
    return out


def compute_grid(
    plan: FloorPlan,
    deployment: Deployment,
    cell_size: float = 0.25,
    index: SpatialIndex | None = None,
    max_aps: int | None = None,
) -> CoverageGrid:
    """Best-server pathloss at every cell centre of the plan boundary."""
    check_deployment(plan, deployment, max_aps)
    ncols, nrows = grid_shape(plan, cell_size)
    grid = CoverageGrid(plan.boundary.origin, cell_size, ncols, nrows, np.empty((0, 0)))
    centers = grid.centers()
    best = None
    for ap in deployment.aps:
        if index is None:
            f = ap_field(plan, ap, deployment.config, centers)
        else:
            f = _ap_field_indexed(plan, ap, deployment.config, centers, index)
        best = f if best is None else np.minimum(best, f)
    return CoverageGrid(grid.origin, cell_size, ncols, nrows, best.reshape(nrows, ncols))


class FieldCache:
    """Memoised single-AP pathloss fields for one plan, config and cell size.

    Optimizers that revisit positions (lattice searches above all) evaluate
    each position once; a deployment's grid is the elementwise minimum of
    its APs' fields, identical to :func:`compute_grid`.
    """

    def __init__(self, plan: FloorPlan, config: RadioConfig, cell_size: float):
        self.plan = plan
        self.config = config
        self.cell_size = cell_size
        ncols, nrows = grid_shape(plan, cell_size)
        self._template = CoverageGrid(plan.boundary.origin, cell_size, ncols, nrows, np.empty((0, 0)))
        self.centers = self._template.centers()
        self._fields: dict[tuple[float, float], np.ndarray] = {}
        self.evaluations = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self._template.nrows, self._template.ncols

    def field(self, ap: Point2D) -> np.ndarray:
        key = (ap.x, ap.y)
        f = self._fields.get(key)
        if f is None:
            f = ap_field(self.plan, ap, self.config, self.centers)
            f.setflags(write=False)
            self._fields[key] = f
        return f

    def grid(self, deployment: Deployment, max_aps: int | None = None) -> CoverageGrid:
        check_deployment(self.plan, deployment, max_aps)
        if deployment.config != self.config:
            raise InvalidDeployment("deployment radio config differs from the cache's")
        self.evaluations += 1
        best = self.field(deployment.aps[0])
        for ap in deployment.aps[1:]:
            best = np.minimum(best, self.field(ap))
        t = self._template
        return CoverageGrid(t.origin, t.cell_size, t.ncols, t.nrows, np.array(best).reshape(t.nrows, t.ncols))


def coverage_fraction(grid: CoverageGrid, threshold: float) -> CoverageStats:
    """Share of cells with pathloss strictly below ``threshold``."""
    v = grid.values
    covered = int(np.count_nonzero(v < threshold))
    total = int(v.size)
    flat = int(np.argmax(v))  # first maximum in row-major order
    row, col = divmod(flat, grid.ncols)
    return CoverageStats(
        coverage_fraction=covered / total,
        threshold=threshold,
        covered_cells=covered,
        total_cells=total,
        worst_cell=grid.cell_center(row, col),
        worst_pathloss=float(v[row, col]),
    )


# ---------------------------------------------------------------------------
# heatmap

OUT_OF_COVERAGE = (0, 0, 255)


def heatmap_color(value: float, vmin: float, threshold: float) -> tuple[int, int, int]:
    """Colour of one cell.

    Cells at or above the threshold are pure blue. Below it the colour runs
    linearly from green ``(0, 255, 0)`` at the grid minimum to red
    ``(255, 0, 0)`` at the threshold: ``t = (value - vmin) / (threshold - vmin)``,
    ``rgb = (round(255 t), round(255 (1 - t)), 0)``. A zero-width span maps to
    ``t = 0``.
    """
    if value >= threshold:
        return OUT_OF_COVERAGE
    span = threshold - vmin
    t = 0.0 if span <= 0 else min(max((value - vmin) / span, 0.0), 1.0)
    return (int(round(255 * t)), int(round(255 * (1 - t))), 0)


def heatmap_pixels(grid: CoverageGrid, threshold: float) -> np.ndarray:
    """(nrows, ncols, 3) uint8 image with the northern row first."""
    v = grid.values
    vmin = float(v.min())
    img = np.empty((grid.nrows, grid.ncols, 3), dtype=np.uint8)
    span = threshold - vmin
    t = np.zeros_like(v) if span <= 0 else np.clip((v - vmin) / span, 0.0, 1.0)
    img[..., 0] = np.rint(255 * t)
    img[..., 1] = np.rint(255 * (1 - t))
    img[..., 2] = 0
    img[v >= threshold] = OUT_OF_COVERAGE
    return img[::-1]


def export_heatmap(grid: CoverageGrid, threshold: float, path: str | Path) -> None:
    """Write a binary PPM (P6), one pixel per cell, north at the top."""
    img = heatmap_pixels(grid, threshold)
    header = f"P6\n{grid.ncols} {grid.nrows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
