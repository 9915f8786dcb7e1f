"""Propose/evaluate loop, deterministic baselines and trace records.

A proposer is any callable ``(task, history) -> Deployment``; ``history`` is
the list of :class:`TraceStep` produced so far. :func:`optimize_loop` drives
one, while :func:`aco_optimize` and :func:`simulated_annealing_optimize`
run their own search but emit the same trace type.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import FloorPlan, Point2D, grid_adjacency, plan_to_json
from .propagation import (
    CoverageGrid,
    CoverageStats,
    Deployment,
    FieldCache,
    NoValidPosition,
    RadioConfig,
    coverage_fraction,
    deployment_problems,
    nearest_valid_position,
    position_problem,
)

MIN_GAIN = 0.005  # greedy adds an AP when the last step gained less than 0.5 pp


class InvalidTask(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class SearchSpaceTooLarge(ValueError):
    pass


class ProposalRejected(Exception):
    """A recoverable proposer failure, recorded as a violation step."""


class ProposerFailure(RuntimeError):
    """The proposer failed irrecoverably; ``trace`` holds the steps so far."""

    def __init__(self, message: str, trace: OptimizationTrace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PlanningTask:
    plan: FloorPlan
    coverage_target: float = 0.95
    threshold: float = 110.0
    max_aps: int = 4
    max_iterations: int = 10
    cell_size: float = 0.25
    radio: RadioConfig = field(default_factory=RadioConfig)

    def __post_init__(self):
        if not 0 < self.coverage_target <= 1:
            raise InvalidTask(f"coverage_target must be in (0, 1], got {self.coverage_target}")
        if self.max_aps < 1:
            raise InvalidTask("max_aps must be >= 1")
        if self.max_iterations < 1:
            raise InvalidTask("max_iterations must be >= 1")
        if not self.cell_size > 0:
            raise InvalidTask("cell_size must be positive")

    def fingerprint(self) -> str:
        doc = {
            "plan": json.loads(plan_to_json(self.plan)),
            "coverage_target": self.coverage_target,
            "threshold": self.threshold,
            "max_aps": self.max_aps,
            "max_iterations": self.max_iterations,
            "cell_size": self.cell_size,
            "radio": vars(self.radio),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Region:
    """A connected patch of uncovered cells."""

    centroid: Point2D
    pathloss: float  # mean over the patch, dB
    cells: int


@dataclass(frozen=True)
class Feedback:
    iteration: int
    stats: CoverageStats | None
    regions: tuple[Region, ...] = ()
    violation: str | None = None

    @property
    def coverage(self) -> float:
        return 0.0 if self.stats is None else self.stats.coverage_fraction


@dataclass(frozen=True)
class TraceStep:
    deployment: Deployment
    feedback: Feedback

    @property
    def coverage(self) -> float:
        return self.feedback.coverage


@dataclass
class OptimizationTrace:
    fingerprint: str
    optimizer: str
    steps: list[TraceStep] = field(default_factory=list)
    outcome: str = "exhausted"  # converged | exhausted | failed
    evaluations: int = 0

    @property
    def best(self) -> TraceStep | None:
        """Highest-coverage valid step; the earliest wins ties."""
        best = None
        for s in self.steps:
            if s.feedback.violation is None and (best is None or s.coverage > best.coverage):
                best = s
        return best

    def best_coverage_sequence(self) -> list[float]:
        out, cur = [], 0.0
        for s in self.steps:
            cur = max(cur, s.coverage)
            out.append(cur)
        return out

    def first_reaching(self, target: float) -> int | None:
        """1-based iteration at which coverage first reached ``target``."""
        for s in self.steps:
            if s.feedback.violation is None and s.coverage >= target:
                return s.feedback.iteration
        return None


# ---------------------------------------------------------------------------
# evaluation


def uncovered_regions(
    grid: CoverageGrid,
    threshold: float,
    k: int = 5,
    links: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[Region, ...]:
    """Top-``k`` connected patches of uncovered cells.

    ``links`` restricts connectivity to the given cell pairs (see
    :func:`geometry.grid_adjacency`), which lets walls split patches room by
    room; without it plain 4-connectivity is used. Ranked by size, then mean
    pathloss (worse first), then centroid (x, y).
    """
    mask = grid.values >= threshold
    if not mask.any():
        return ()
    flat = mask.ravel()
    if links is None:
        labels, n = ndimage.label(mask)
        labels = labels.ravel() - 1
    else:
        u, v = links
        keep = flat[u] & flat[v]
        size = flat.size
        g = coo_matrix((np.ones(int(keep.sum()), dtype=np.int8), (u[keep], v[keep])), shape=(size, size))
        _, comp = connected_components(g, directed=False)
        # renumber components that contain uncovered cells in row-major order
        _, labels_unc = np.unique(comp[flat], return_inverse=True)
        labels = np.full(size, -1)
        labels[flat] = labels_unc
        n = int(labels_unc.max()) + 1
    rows, cols = np.divmod(np.arange(flat.size), grid.ncols)
    sel = labels >= 0
    lab = labels[sel]
    counts = np.bincount(lab, minlength=n)
    mean_pl = np.bincount(lab, weights=grid.values.ravel()[sel], minlength=n) / counts
    cx = np.bincount(lab, weights=cols[sel], minlength=n) / counts
    cy = np.bincount(lab, weights=rows[sel], minlength=n) / counts
    regions = [
        Region(
            Point2D(
                float(grid.origin.x + (cx[i] + 0.5) * grid.cell_size),
                float(grid.origin.y + (cy[i] + 0.5) * grid.cell_size),
            ),
            float(mean_pl[i]),
            int(counts[i]),
        )
        for i in range(n)
    ]
    regions.sort(key=lambda g: (-g.cells, -g.pathloss, g.centroid.x, g.centroid.y))
    return tuple(regions[:k])


class Evaluator:
    """Grid evaluator bound to one task; caches single-AP fields."""

    def __init__(self, task: PlanningTask, top_k: int = 5):
        self.task = task
        self.top_k = top_k
        self.cache = FieldCache(task.plan, task.radio, task.cell_size)
        nrows, ncols = self.cache.shape
        origin = task.plan.boundary.origin
        xs = origin.x + (np.arange(ncols) + 0.5) * task.cell_size
        ys = origin.y + (np.arange(nrows) + 0.5) * task.cell_size
        # every wall, openings included, separates uncovered patches
        self.links = grid_adjacency(task.plan, xs, ys, through=())

    @property
    def evaluations(self) -> int:
        return self.cache.evaluations

    def grid(self, deployment: Deployment) -> CoverageGrid:
        return self.cache.grid(deployment, self.task.max_aps)

    def feedback(self, deployment: Deployment, iteration: int) -> Feedback:
        problems = deployment_problems(self.task.plan, deployment, self.task.max_aps)
        if deployment.config != self.task.radio:
            problems.append("radio config differs from the task's")
        if problems:
            return Feedback(iteration, None, (), "; ".join(problems))
        grid = self.grid(deployment)
        stats = coverage_fraction(grid, self.task.threshold)
        return Feedback(iteration, stats, uncovered_regions(grid, self.task.threshold, self.top_k, self.links))


Proposer = Callable[[PlanningTask, Sequence[TraceStep]], Deployment]


def optimize_loop(
    task: PlanningTask,
    proposer: Proposer,
    evaluator: Evaluator | None = None,
    name: str | None = None,
) -> OptimizationTrace:
    """Ask ``proposer`` for deployments until the target or the budget is hit.

    Invalid proposals and :class:`ProposalRejected` become violation steps.
    Any other exception from the proposer is re-raised as :class:`ProposerFailure` carrying the partial
    trace.
    """
    evaluator = evaluator or Evaluator(task)
    trace = OptimizationTrace(task.fingerprint(), name or getattr(proposer, "name", "custom"))
    start = evaluator.evaluations
    for it in range(1, task.max_iterations + 1):
        try:
            deployment = proposer(task, list(trace.steps))
        except ProposalRejected as exc:
            trace.steps.append(TraceStep(Deployment((), task.radio), Feedback(it, None, (), str(exc))))
            continue
        except Exception as exc:
            trace.outcome = "failed"
            trace.evaluations = evaluator.evaluations - start
            raise ProposerFailure(f"proposer failed at iteration {it}: {exc}", trace) from exc
        fb = evaluator.feedback(deployment, it)
        trace.steps.append(TraceStep(deployment, fb))
        if fb.violation is None and fb.coverage >= task.coverage_target:
            trace.outcome = "converged"
            break
    trace.evaluations = evaluator.evaluations - start
    return trace


# ---------------------------------------------------------------------------
# greedy proposer


def _key(d: Deployment) -> tuple:
    return tuple((p.x, p.y) for p in d.aps)


def greedy_worst_point_proposer(task: PlanningTask, history: Sequence[TraceStep]) -> Deployment:
    """Perception-driven refinement of the best deployment so far.

    Starts with one AP at the plan centroid. Afterwards, if the AP budget
    allows and the most recent move gained less than 0.5 percentage points
    over the best coverage before it, an AP is added at the centroid of the
    worst uncovered region; otherwise the AP nearest that centroid moves half
    way towards it. Positions are snapped off walls, and a proposal already in
    the history falls through to the next-worst region.
    """
    plan = task.plan
    start = Deployment((nearest_valid_position(plan, plan.boundary.centroid),), task.radio)
    valid = [s for s in history if s.feedback.violation is None]
    if not valid:
        return start
    best = max(valid, key=lambda s: s.coverage)  # max keeps the earliest on ties
    regions = best.feedback.regions
    if not regions:
        return best.deployment

    gain = _last_move_gain(history)
    seen = {_key(s.deployment) for s in history}
    aps = list(best.deployment.aps)

    def snap(p: Point2D) -> Point2D | None:
        try:
            return nearest_valid_position(plan, p)
        except NoValidPosition:
            return None

    def additions():
        for g in regions:
            p = snap(g.centroid)
            if p is not None:
                yield Deployment(tuple(aps + [p]), task.radio)

    def moves():
        for g in regions:
            k = min(range(len(aps)), key=lambda i: (aps[i].dist(g.centroid), aps[i].x, aps[i].y))
            a = aps[k]
            p = snap(Point2D((a.x + g.centroid.x) / 2, (a.y + g.centroid.y) / 2))
            if p is not None:
                yield Deployment(tuple(aps[:k] + [p] + aps[k + 1 :]), task.radio)

    can_add = len(aps) < task.max_aps
    order = [additions(), moves()] if can_add and gain < MIN_GAIN else [moves()] + ([additions()] if can_add else [])
    for gen in order:
        for d in gen:
            if _key(d) not in seen:
                return d
    return best.deployment


greedy_worst_point_proposer.name = "greedy"


def _last_move_gain(history: Sequence[TraceStep]) -> float:
    """Coverage gain of the most recent move step; inf if none happened yet.

    A step is a move when it keeps the AP count of the best valid step
    before it, and an addition when it has more APs.
    """
    gain = math.inf
    best: TraceStep | None = None
    for s in history:
        if best is not None and s.feedback.violation is None and len(s.deployment.aps) <= len(best.deployment.aps):
            gain = s.coverage - best.coverage
        if s.feedback.violation is None and (best is None or s.coverage > best.coverage):
            best = s
    return gain


# ---------------------------------------------------------------------------
# placement lattice and exhaustive oracle


def placement_lattice(plan: FloorPlan, spacing: float = 1.0) -> list[Point2D]:
    """Centres of a ``spacing`` lattice over the boundary that can host an AP."""
    if not spacing > 0:
        raise InvalidParams("lattice spacing must be positive")
    b = plan.boundary
    nx = max(1, int(math.floor(b.width / spacing + 1e-9)))
    ny = max(1, int(math.floor(b.depth / spacing + 1e-9)))
    # centre the lattice when spacing does not divide the boundary
    ox = b.origin.x + (b.width - nx * spacing) / 2
    oy = b.origin.y + (b.depth - ny * spacing) / 2
    pts = [
        Point2D(ox + (i + 0.5) * spacing, oy + (j + 0.5) * spacing)
        for i in range(nx)
        for j in range(ny)
    ]
    return sorted(p for p in pts if position_problem(plan, p) is None)


def _packed_masks(evaluator: Evaluator, points: Sequence[Point2D]) -> np.ndarray:
    thr = evaluator.task.threshold
    masks = np.stack([evaluator.cache.field(p) < thr for p in points])
    return np.packbits(masks, axis=1)


def brute_force_oracle(
    task: PlanningTask,
    lattice_spacing: float = 1.0,
    k: int = 1,
    limit: int = 10**7,
    evaluator: Evaluator | None = None,
) -> Deployment:
    """Exhaustive best k-subset of the placement lattice.

    Ties go to the lexicographically smallest position tuple.
    """
    points = placement_lattice(task.plan, lattice_spacing)
    if not points:
        raise NoValidPosition("placement lattice is empty")
    if k < 1 or k > len(points):
        raise InvalidParams(f"k={k} outside 1..{len(points)}")
    if math.comb(len(points), k) > limit:
        raise SearchSpaceTooLarge(f"C({len(points)}, {k}) exceeds {limit}")
    evaluator = evaluator or Evaluator(task)
    packed = _packed_masks(evaluator, points)
    best_count, best_combo = -1, None
    combos = itertools.combinations(range(len(points)), k)
    while True:
        chunk = np.array(list(itertools.islice(combos, 20000)), dtype=np.int64)
        if chunk.size == 0:
            break
        acc = packed[chunk[:, 0]]
        for j in range(1, k):
            acc = acc | packed[chunk[:, j]]
        counts = np.bitwise_count(acc).sum(axis=1)
        i = int(np.argmax(counts))
        if counts[i] > best_count:
            best_count, best_combo = int(counts[i]), chunk[i]
    return Deployment(tuple(points[i] for i in best_combo), task.radio)


def minimum_aps_for_target(
    task: PlanningTask, lattice_spacing: float = 1.0, max_k: int | None = None
) -> tuple[int, Deployment, float] | None:
    """Smallest AP count whose oracle deployment meets the coverage target."""
    evaluator = Evaluator(task)
    for k in range(1, (max_k or task.max_aps) + 1):
        d = brute_force_oracle(task, lattice_spacing, k, evaluator=evaluator)
        cov = coverage_fraction(evaluator.grid(d), task.threshold).coverage_fraction
        if cov >= task.coverage_target:
            return k, d, cov
    return None


# ---------------------------------------------------------------------------
# ant colony optimisation


@dataclass(frozen=True)
class AcoParams:
    n_ants: int = 20
    alpha: float = 1.0
    beta: float = 0.0
    rho: float = 0.1
    lattice_spacing: float = 1.0
    seed: int = 0
    heuristic: str = "uniform"  # or "single_ap_coverage"
    initial_pheromone: float = 1.0

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise InvalidParams(f"rho must be in (0, 1), got {self.rho}")
        if self.n_ants < 1:
            raise InvalidParams("n_ants must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidParams("alpha and beta must be >= 0")
        if not self.lattice_spacing > 0:
            raise InvalidParams("lattice_spacing must be positive")
        if self.heuristic not in ("uniform", "single_ap_coverage"):
            raise InvalidParams(f"unknown heuristic {self.heuristic!r}")
        if not self.initial_pheromone > 0:
            raise InvalidParams("initial_pheromone must be positive")


def aco_optimize(task: PlanningTask, params: AcoParams = AcoParams(), evaluator: Evaluator | None = None) -> OptimizationTrace:
    """Ant colony search over k-subsets of the placement lattice.

    Each ant draws ``max_aps`` distinct lattice points with probability
    proportional to ``pheromone**alpha * heuristic**beta``. After every
    iteration pheromone evaporates by ``rho`` and each ant deposits its
    coverage fraction on the points it used. One trace step per iteration
    holds the best-so-far deployment.
    """
    evaluator = evaluator or Evaluator(task)
    points = placement_lattice(task.plan, params.lattice_spacing)
    if not points:
        raise NoValidPosition("placement lattice is empty")
    n = len(points)
    k = min(task.max_aps, n)
    rng = np.random.default_rng(params.seed)
    tau = np.full(n, params.initial_pheromone)
    if params.heuristic == "uniform":
        eta = np.ones(n)
    else:
        eta = np.array([np.mean(evaluator.cache.field(p) < task.threshold) for p in points]) + 1e-6
    trace = OptimizationTrace(task.fingerprint(), "aco")
    start = evaluator.evaluations
    best: TraceStep | None = None
    for it in range(1, task.max_iterations + 1):
        deposits = np.zeros(n)
        for _ in range(params.n_ants):
            w = tau**params.alpha * eta**params.beta
            chosen: list[int] = []
            for _ in range(k):
                p = w.copy()
                p[chosen] = 0.0
                p /= p.sum()
                chosen.append(int(rng.choice(n, p=p)))
            d = Deployment(tuple(sorted(points[i] for i in chosen)), task.radio)
            fb = evaluator.feedback(d, it)
            deposits[chosen] += fb.coverage
            if best is None or fb.coverage > best.coverage:
                best = TraceStep(d, fb)
        tau = (1 - params.rho) * tau + deposits
        trace.steps.append(TraceStep(best.deployment, _renumber(best.feedback, it)))
        if best.coverage >= task.coverage_target:
            trace.outcome = "converged"
            break
    trace.evaluations = evaluator.evaluations - start
    return trace


def _renumber(fb: Feedback, iteration: int) -> Feedback:
    return Feedback(iteration, fb.stats, fb.regions, fb.violation)


# ---------------------------------------------------------------------------
# simulated annealing


@dataclass(frozen=True)
class AnnealParams:
    initial_temperature: float = 0.02  # in units of coverage fraction
    cooling_rate: float = 0.95
    move_scale: float = 1.5  # metres, std-dev of the Gaussian move
    seed: int = 0
    n_aps: int | None = None  # defaults to the task budget

    def __post_init__(self):
        if self.initial_temperature < 0:
            raise InvalidParams("initial_temperature must be >= 0")
        if not 0 < self.cooling_rate < 1:
            raise InvalidParams(f"cooling_rate must be in (0, 1), got {self.cooling_rate}")
        if not self.move_scale > 0:
            raise InvalidParams("move_scale must be positive")
        if self.n_aps is not None and self.n_aps < 1:
            raise InvalidParams("n_aps must be >= 1")


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Accept improvements always and a loss ``delta < 0`` w.p. ``exp(delta / T)``.

    At ``T = 0`` losses are never accepted and no random number is drawn.
    """
    if delta >= 0:
        return True
    if temperature <= 0:
        return False
    return bool(rng.random() < math.exp(delta / temperature))


def simulated_annealing_optimize(
    task: PlanningTask, params: AnnealParams = AnnealParams(), evaluator: Evaluator | None = None
) -> OptimizationTrace:
    """Metropolis search over AP positions with Gaussian single-AP moves.

    The first iteration evaluates a random lattice start; each later one
    moves one random AP, clips it into the boundary and snaps it off walls.
    Worse proposals are accepted with probability ``exp(delta / T)``;
    ``T = 0`` never accepts a worse state. Steps record the best so far.
    """
    evaluator = evaluator or Evaluator(task)
    plan = task.plan
    b = plan.boundary
    n_aps = min(params.n_aps or task.max_aps, task.max_aps)
    rng = np.random.default_rng(params.seed)
    lattice = placement_lattice(plan, 1.0) or [nearest_valid_position(plan, b.centroid)]
    picks = rng.choice(len(lattice), size=min(n_aps, len(lattice)), replace=False)
    current = Deployment(tuple(lattice[int(i)] for i in picks), task.radio)
    trace = OptimizationTrace(task.fingerprint(), "anneal")
    start = evaluator.evaluations
    cur_fb = evaluator.feedback(current, 1)
    best = TraceStep(current, cur_fb)
    trace.steps.append(best)
    temperature = params.initial_temperature
    it = 1
    while best.coverage < task.coverage_target and it < task.max_iterations:
        it += 1
        aps = list(current.aps)
        j = int(rng.integers(len(aps)))
        dx, dy = rng.normal(0.0, params.move_scale, size=2)
        eps = 1e-3
        x = min(max(aps[j].x + dx, b.origin.x + eps), b.x1 - eps)
        y = min(max(aps[j].y + dy, b.origin.y + eps), b.y1 - eps)
        try:
            aps[j] = nearest_valid_position(plan, Point2D(float(x), float(y)))
        except NoValidPosition:
            pass
        cand = Deployment(tuple(aps), task.radio)
        fb = evaluator.feedback(cand, it)
        if metropolis_accept(fb.coverage - cur_fb.coverage, temperature, rng):
            current, cur_fb = cand, fb
        if fb.coverage > best.coverage:
            best = TraceStep(cand, fb)
        trace.steps.append(TraceStep(best.deployment, _renumber(best.feedback, it)))
        temperature *= params.cooling_rate
    if best.coverage >= task.coverage_target:
        trace.outcome = "converged"
    trace.evaluations = evaluator.evaluations - start
    return trace


# ---------------------------------------------------------------------------
# serialization


def step_record(step: TraceStep) -> dict:
    fb = step.feedback
    rec = {
        "record": "step",
        "iteration": fb.iteration,
        "aps": step.deployment.as_list(),
        "coverage": fb.coverage,
        "violation": fb.violation,
        "worst_regions": [
            {"centroid": [g.centroid.x, g.centroid.y], "pathloss": g.pathloss, "cells": g.cells}
            for g in fb.regions
        ],
    }
    if fb.stats is not None:
        rec["stats"] = fb.stats.to_dict()
    return rec


def trace_records(trace: OptimizationTrace) -> list[dict]:
    best = trace.best
    return (
        [{"record": "header", "task": trace.fingerprint, "optimizer": trace.optimizer}]
        + [step_record(s) for s in trace.steps]
        + [
            {
                "record": "result",
                "outcome": trace.outcome,
                "iterations": len(trace.steps),
                "evaluations": trace.evaluations,
                "best_iteration": None if best is None else best.feedback.iteration,
                "best_coverage": 0.0 if best is None else best.coverage,
                "best_aps": None if best is None else best.deployment.as_list(),
            }
        ]
    )


def trace_to_jsonl(trace: OptimizationTrace) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in trace_records(trace))
