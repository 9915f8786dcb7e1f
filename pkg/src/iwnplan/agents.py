"""Joint building-layout and AP design with five cooperating agents.

Per round: the layout agent proposes room arrangements, the entity agent
adds doors, the IWN design agent optimises APs for each candidate, the
correction agent repairs misplaced APs, and the evaluation agent scores
everything and writes the feedback that seeds the next round. Agents only
exchange the dataclasses defined here.

Every agent except correction has a deterministic rule backend; the layout
and entity agents can also ask a chat endpoint and fall back to rules when
its replies do not parse into a valid plan.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .geometry import (
    TOL,
    ArchitecturalRules,
    Boundary,
    FloorPlan,
    Material,
    Point2D,
    Room,
    default_materials,
    plan_to_json,
    rooms_overlap,
    validate_plan,
)
from .layout import SIDES, DoorSpec, OuterDoorSpec, _edge_line, assemble_plan
from .llm import LlmClient, ParseFailure, PromptBundle, extract_json_object
from .optimizers import (
    AcoParams,
    Evaluator,
    OptimizationTrace,
    PlanningTask,
    TraceStep,
    aco_optimize,
    greedy_worst_point_proposer,
    optimize_loop,
)
from .propagation import Deployment, RadioConfig, nearest_valid_position, position_problem

log = logging.getLogger(__name__)

CHECKS = ("room anchoring", "door rule", "circulation", "non-overlap")


class NoFeasibleLayout(ValueError):
    pass


class NoValidDoorPlacement(ValueError):
    pass


@dataclass(frozen=True)
class JointDesignTask:
    width: float = 20.0
    depth: float = 10.0
    outer_door: OuterDoorSpec = OuterDoorSpec("W", None, 1.0, "wood")
    room_sizes: tuple[tuple[float, float], ...] = ((4.0, 3.0),) * 4
    door_width: float = 0.8
    door_material: str = "wood"
    coverage_target: float = 0.95
    threshold: float = 80.0
    max_aps: int = 4
    max_iterations: int = 10
    cell_size: float = 0.25
    radio: RadioConfig = RadioConfig(pathloss_exponent=3.0)
    w_coverage: float = 0.7
    w_rationality: float = 0.3
    n_candidates: int = 10
    max_rounds: int = 5
    seed: int = 0
    exterior: str = "concrete"
    partition: str = "brick"
    materials: dict[str, Material] = field(default_factory=default_materials)
    placement_step: float = 1.0
    door_clearance: float = 2.0  # depth of the zone kept free inside the outer door
    corner_bias: float = 4.0  # 0 samples room slots uniformly

    def __post_init__(self):
        if self.w_coverage < 0 or self.w_rationality < 0 or abs(self.w_coverage + self.w_rationality - 1) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if not 0 < self.coverage_target <= 1:
            raise ValueError(f"coverage_target must be in (0, 1], got {self.coverage_target}")
        if self.max_aps < 1 or self.max_iterations < 1 or not self.cell_size > 0:
            raise ValueError("max_aps and max_iterations must be >= 1 and cell_size positive")

    @property
    def boundary(self) -> Boundary:
        return Boundary(Point2D(0.0, 0.0), self.width, self.depth)

    @property
    def rules(self) -> ArchitecturalRules:
        return ArchitecturalRules(
            room_sizes=tuple(self.room_sizes),
            door_width=self.door_width,
            door_material=self.door_material,
        )

    def planning_task(self, plan: FloorPlan) -> PlanningTask:
        return PlanningTask(
            plan,
            coverage_target=self.coverage_target,
            threshold=self.threshold,
            max_aps=self.max_aps,
            max_iterations=self.max_iterations,
            cell_size=self.cell_size,
            radio=self.radio,
        )

    def build_plan(self, rooms: Sequence[Room], doors: Sequence[DoorSpec] = ()) -> FloorPlan:
        return assemble_plan(
            self.boundary,
            tuple(rooms),
            tuple(doors),
            self.outer_door,
            materials=self.materials,
            exterior=self.exterior,
            partition=self.partition,
            rules=self.rules,
        )


@dataclass(frozen=True)
class LayoutProposal:
    plan: FloorPlan
    provenance: str
    rationale: str = ""

    def fingerprint(self) -> str:
        return hashlib.sha256(plan_to_json(self.plan).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class JointScore:
    coverage: float
    ap_count: int
    iwn_efficiency: float
    rationality: float
    overall: float
    failed_checks: tuple[str, ...] = ()


@dataclass(frozen=True)
class GlobalFeedback:
    text: str
    round: int
    best: LayoutProposal | None = None


def iwn_efficiency(coverage: float, ap_count: int) -> float:
    """Coverage fraction per deployed AP."""
    return coverage / ap_count


# ---------------------------------------------------------------------------
# layout agent


def _slots(task: JointDesignTask, w: float, d: float) -> list[Room]:
    """Every placement of a w x d room with an edge on an outer wall."""
    W, D, s = task.width, task.depth, task.placement_step
    out = set()
    if w > W + TOL or d > D + TOL:
        return []
    xs = [round(k * s, 9) for k in range(int((W - w) / s + 1e-9) + 1)] + [W - w]
    ys = [round(k * s, 9) for k in range(int((D - d) / s + 1e-9) + 1)] + [D - d]
    for x in xs:
        out.add((x, 0.0))
        out.add((x, D - d))
    for y in ys:
        out.add((0.0, y))
        out.add((W - w, y))
    return [Room(Point2D(x, y), w, d, "") for x, y in sorted(out)]


def _door_zone(task: JointDesignTask) -> Room:
    od = task.outer_door
    half = od.width / 2 + 0.5
    depth = task.door_clearance
    along_ew = task.depth if od.side in "EW" else task.width
    c = along_ew / 2 if od.center is None else od.center
    if od.side == "W":
        return Room(Point2D(0.0, c - half), depth, 2 * half, "door-zone")
    if od.side == "E":
        return Room(Point2D(task.width - depth, c - half), depth, 2 * half, "door-zone")
    if od.side == "S":
        return Room(Point2D(c - half, 0.0), 2 * half, depth, "door-zone")
    return Room(Point2D(c - half, task.depth - depth), 2 * half, depth, "door-zone")


def _labels(n: int) -> list[str]:
    return [chr(ord("A") + i) if i < 26 else f"R{i}" for i in range(n)]


def _layout_key(rooms: Sequence[Room]) -> tuple:
    return tuple(sorted((round(r.origin.x, 6), round(r.origin.y, 6), round(r.width, 6), round(r.depth, 6)) for r in rooms))


def _feasible(task: JointDesignTask, rooms: Sequence[Room]) -> bool:
    zone = _door_zone(task)
    if any(rooms_overlap(r, zone) for r in rooms):
        return False
    for i, a in enumerate(rooms):
        if any(rooms_overlap(a, b) for b in rooms[i + 1 :]):
            return False
    return all(_door_options(task, rooms, r) for r in rooms)


def _slot_weights(task: JointDesignTask, slots: list[Room]) -> np.ndarray:
    """Sampling weights favouring slots far from the centre of the floor.

    Rooms pushed outward leave one open area that a single central AP can
    see, which is what wireless-friendly layouts look like.
    """
    c = task.boundary.centroid
    half_diag = 0.5 * float(np.hypot(task.width, task.depth))
    d = np.array([np.hypot(r.center.x - c.x, r.center.y - c.y) for r in slots]) / half_diag
    w = np.exp(task.corner_bias * d)
    return w / w.sum()


def _random_layout(task: JointDesignTask, rng: np.random.Generator, slot_table: list[list[Room]]) -> list[Room] | None:
    placed: list[Room] = []
    zone = _door_zone(task)
    for label, slots in zip(_labels(len(slot_table)), slot_table):
        order = rng.choice(len(slots), size=len(slots), replace=False, p=_slot_weights(task, slots))
        for k in order:
            cand = replace(slots[int(k)], label=label)
            if rooms_overlap(cand, zone) or any(rooms_overlap(cand, p) for p in placed):
                continue
            placed.append(cand)
            break
        else:
            return None
    return placed


def _slot_table(task: JointDesignTask) -> list[list[Room]]:
    table = []
    for w, d in task.room_sizes:
        slots = _slots(task, w, d)
        if abs(w - d) > TOL:
            slots += _slots(task, d, w)
        table.append(slots)
    return table


def _check_area(task: JointDesignTask) -> None:
    if task.width <= 0 or task.depth <= 0:
        raise NoFeasibleLayout("boundary has zero size")
    area = sum(w * d for w, d in task.room_sizes)
    if area > task.width * task.depth + TOL:
        raise NoFeasibleLayout(f"rooms need {area:g} m2 but the boundary has {task.width * task.depth:g} m2")


def _rule_layouts(
    task: JointDesignTask, feedback: GlobalFeedback | None, rng: np.random.Generator, n: int, attempts: int = 4000
) -> list[LayoutProposal]:
    table = _slot_table(task)
    if any(not s for s in table):
        raise NoFeasibleLayout("a required room does not fit inside the boundary")
    rules = task.rules.without_doors()
    seen: set[tuple] = set()
    if feedback is not None and feedback.best is not None:
        seen.add(_layout_key(feedback.best.plan.rooms))
    out: list[LayoutProposal] = []
    base = list(feedback.best.plan.rooms) if feedback is not None and feedback.best is not None else None
    for attempt in range(attempts):
        if len(out) >= n:
            break
        # with feedback, half the candidates perturb the best layout so far
        if base is not None and attempt % 2 == 0:
            rooms = list(base)
            k = int(rng.integers(len(rooms)))
            slots = table[k]
            j = int(rng.choice(len(slots), p=_slot_weights(task, slots)))
            rooms[k] = replace(slots[j], label=rooms[k].label)
            how = f"moved room {rooms[k].label} of the previous best"
        else:
            rooms = _random_layout(task, rng, table)
            how = "random anchored placement"
        if rooms is None or not _feasible(task, rooms):
            continue
        key = _layout_key(rooms)
        if key in seen:
            continue
        plan = task.build_plan(rooms)
        if validate_plan(plan, rules):
            continue
        seen.add(key)
        out.append(LayoutProposal(plan, "layout-agent/rule", how))
    if not out:
        raise NoFeasibleLayout(f"no valid layout found in {attempts} attempts")
    return out


LAYOUT_SYSTEM = (
    "You are an architect designing the interior layout of a rectangular office. "
    "Think step by step, then finish with one JSON object "
    '{"rooms": [{"label": "A", "x": <m>, "y": <m>, "width": <m>, "depth": <m>}, ...]} '
    "giving each room's lower-left corner and size."
)


def _layout_prompt(task: JointDesignTask, feedback: GlobalFeedback | None, index: int) -> PromptBundle:
    sizes = ", ".join(f"{_labels(len(task.room_sizes))[i]}: {w:g} x {d:g} m" for i, (w, d) in enumerate(task.room_sizes))
    od = task.outer_door
    description = (
        f"Office boundary: {task.width:g} m (x) by {task.depth:g} m (y), origin at (0, 0). "
        f"Outer door {od.width:g} m wide at the centre of the {od.side} wall.\n"
        f"Rooms to place (rotation allowed): {sizes}.\n"
        "Each room needs at least one edge on an outer wall, rooms must not overlap, "
        f"and the area within {task.door_clearance:g} m of the outer door stays free. "
        f"Each room later gets one {task.door_width:g} m {task.door_material} door. "
        f"This is candidate {index + 1} of {task.n_candidates}; make it differ from the others."
    )
    knowledge = (
        "Wireless-friendly layouts keep partitions out of the line of sight between a central "
        "access point and most of the floor; rooms pushed to corners and doors facing the open "
        "area usually need fewer access points."
    )
    perception = feedback.text if feedback is not None else "no prior rounds"
    return PromptBundle(description, knowledge, perception, LAYOUT_SYSTEM)


def _parse_layout(text: str, task: JointDesignTask) -> list[Room]:
    doc = extract_json_object(text, "rooms")
    if doc is None or not isinstance(doc["rooms"], list):
        raise ParseFailure('no JSON object with a "rooms" list found')
    rooms = []
    for k, r in enumerate(doc["rooms"]):
        try:
            rooms.append(
                Room(
                    Point2D(float(r["x"]), float(r["y"])),
                    float(r["width"]),
                    float(r["depth"]),
                    str(r.get("label", _labels(len(doc["rooms"]))[k])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseFailure(f"room {k} is malformed: {exc}") from exc
    plan = task.build_plan(rooms)
    problems = validate_plan(plan, task.rules.without_doors())
    if problems:
        raise ParseFailure(str(problems[0]))
    if not _feasible(task, rooms):
        raise ParseFailure("layout blocks the outer door or leaves a room without a usable door wall")
    return rooms


def layout_agent(
    task: JointDesignTask,
    feedback: GlobalFeedback | None = None,
    backend: str = "rule",
    client: LlmClient | None = None,
    seed: int | Sequence[int] | None = None,
    max_retries: int = 2,
) -> list[LayoutProposal]:
    """Propose ``task.n_candidates`` distinct room layouts.

    The rule backend draws anchored, non-overlapping placements with a
    seeded generator; given feedback naming a best layout, half of the
    candidates are single-room moves of it. The llm backend asks ``client``
    once per candidate and falls back to the rule backend for that slot
    after ``max_retries`` unusable replies.
    """
    _check_area(task)
    rng = np.random.default_rng(task.seed if seed is None else seed)
    if backend == "rule":
        return _rule_layouts(task, feedback, rng, task.n_candidates)
    if backend != "llm" or client is None:
        raise ValueError(f"unknown layout backend {backend!r} (llm needs a client)")
    out: list[LayoutProposal] = []
    seen: set[tuple] = set()
    for i in range(task.n_candidates):
        bundle = _layout_prompt(task, feedback, i)
        rooms = None
        for _ in range(max_retries + 1):
            try:
                rooms = _parse_layout(client.complete(bundle), task)
            except ParseFailure as exc:
                bundle = replace(bundle, perception=bundle.perception + f"\nnote: previous reply rejected: {exc}")
                continue
            if _layout_key(rooms) in seen:
                bundle = replace(bundle, perception=bundle.perception + "\nnote: duplicate of an earlier candidate")
                rooms = None
                continue
            break
        if rooms is not None:
            seen.add(_layout_key(rooms))
            out.append(LayoutProposal(task.build_plan(rooms), "layout-agent/llm", "model proposal"))
        else:
            log.info("layout candidate %d: falling back to rule backend", i)
            for p in _rule_layouts(task, None, rng, task.n_candidates):
                if _layout_key(p.plan.rooms) not in seen:
                    seen.add(_layout_key(p.plan.rooms))
                    out.append(replace(p, provenance="layout-agent/rule-fallback"))
                    break
    return out


# ---------------------------------------------------------------------------
# entity agent


def _on_outer(task: JointDesignTask, orient: str, coord: float) -> bool:
    if orient == "h":
        return abs(coord) <= TOL or abs(coord - task.depth) <= TOL
    return abs(coord) <= TOL or abs(coord - task.width) <= TOL


def _subtract(intervals: list[tuple[float, float]], lo: float, hi: float) -> list[tuple[float, float]]:
    out = []
    for a, b in intervals:
        if hi <= a + TOL or lo >= b - TOL:
            out.append((a, b))
            continue
        if lo > a + TOL:
            out.append((a, lo))
        if hi < b - TOL:
            out.append((hi, b))
    return out


def _free_depth(task: JointDesignTask, rooms: Sequence[Room], room: Room, side: str, at: float) -> float:
    """Clear distance in front of ``side`` of ``room`` at position ``at``."""
    if side == "N":
        y = room.y1
        blockers = [r.origin.y - y for r in rooms if r is not room and r.origin.x < at < r.x1 and r.origin.y >= y - TOL]
        return min(blockers + [task.depth - y])
    if side == "S":
        y = room.origin.y
        blockers = [y - r.y1 for r in rooms if r is not room and r.origin.x < at < r.x1 and r.y1 <= y + TOL]
        return min(blockers + [y])
    if side == "E":
        x = room.x1
        blockers = [r.origin.x - x for r in rooms if r is not room and r.origin.y < at < r.y1 and r.origin.x >= x - TOL]
        return min(blockers + [task.width - x])
    x = room.origin.x
    blockers = [x - r.x1 for r in rooms if r is not room and r.origin.y < at < r.y1 and r.x1 <= x + TOL]
    return min(blockers + [x])


def _door_options(task: JointDesignTask, rooms: Sequence[Room], room: Room) -> list[DoorSpec]:
    """Door placements for ``room`` ranked by the free space they open onto."""
    need = task.door_width + 0.2
    ranked = []
    for side in SIDES:
        orient, coord, lo, hi = _edge_line(room, side)
        if _on_outer(task, orient, coord):
            continue
        free = [(lo, hi)]
        for other in rooms:
            if other is room:
                continue
            for oside in SIDES:
                o_orient, o_coord, o_lo, o_hi = _edge_line(other, oside)
                if o_orient == orient and abs(o_coord - coord) <= TOL:
                    free = _subtract(free, o_lo, o_hi)
        for a, b in free:
            if b - a + TOL < need:
                continue
            center = round((a + b) / 2, 9)
            depth = _free_depth(task, rooms, room, side, center)
            if depth < 1.0:
                continue
            ranked.append((-depth, -(b - a), SIDES.index(side), center, side))
    ranked.sort()
    return [DoorSpec(room.label, side, center, task.door_width, task.door_material) for *_, center, side in ranked]


ENTITY_SYSTEM = (
    "You place doors in an office layout. Finish with one JSON object "
    '{"doors": [{"room": "A", "side": "N|E|S|W", "center": <m along that side>}, ...]} '
    "with exactly one door per room."
)


def _parse_doors(text: str, task: JointDesignTask, rooms: Sequence[Room]) -> list[DoorSpec]:
    doc = extract_json_object(text, "doors")
    if doc is None or not isinstance(doc["doors"], list):
        raise ParseFailure('no JSON object with a "doors" list found')
    try:
        doors = [
            DoorSpec(str(d["room"]), str(d["side"]), float(d["center"]), task.door_width, task.door_material)
            for d in doc["doors"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseFailure(f"malformed door entry: {exc}") from exc
    try:
        plan = task.build_plan(rooms, doors)
    except (KeyError, ValueError) as exc:
        raise ParseFailure(f"door does not sit on a room wall: {exc}") from exc
    problems = validate_plan(plan, task.rules)
    if problems:
        raise ParseFailure(str(problems[0]))
    return doors


def entity_agent(
    proposal: LayoutProposal,
    task: JointDesignTask,
    backend: str = "rule",
    client: LlmClient | None = None,
    max_retries: int = 2,
    max_combinations: int = 64,
) -> LayoutProposal:
    """Add one door per room (and the outer door) so circulation holds.

    Rule backend: each room's door is centred on the free stretch of the
    interior wall that opens onto the deepest free space. If the resulting
    plan fails the circulation check, lower-ranked options are tried.
    """
    rooms = list(proposal.plan.rooms)
    if backend == "llm" and client is not None:
        desc = "Rooms: " + "; ".join(
            f"{r.label} at ({r.origin.x:g}, {r.origin.y:g}) size {r.width:g} x {r.depth:g}" for r in rooms
        )
        bundle = PromptBundle(desc, f"Doors are {task.door_width:g} m wide.", "no prior attempts", ENTITY_SYSTEM)
        for _ in range(max_retries + 1):
            try:
                doors = _parse_doors(client.complete(bundle), task, rooms)
            except ParseFailure as exc:
                bundle = replace(bundle, perception=f"previous reply rejected: {exc}")
                continue
            return LayoutProposal(task.build_plan(rooms, doors), proposal.provenance + "+entity/llm", proposal.rationale)
        log.info("entity agent: falling back to rule backend")
    elif backend not in ("rule", "llm"):
        raise ValueError(f"unknown entity backend {backend!r}")

    options = []
    for r in rooms:
        opts = _door_options(task, rooms, r)
        if not opts:
            raise NoValidDoorPlacement(f"room {r.label} has no interior wall facing free space")
        options.append(opts)
    tried = 0
    for combo in _ranked_combinations([len(o) for o in options]):
        doors = [options[i][j] for i, j in enumerate(combo)]
        plan = task.build_plan(rooms, doors)
        if not validate_plan(plan, task.rules):
            return LayoutProposal(plan, proposal.provenance + "+entity/rule", proposal.rationale)
        tried += 1
        if tried >= max_combinations:
            break
    raise NoValidDoorPlacement("no door arrangement gives full circulation")


def _ranked_combinations(sizes: list[int]):
    """Index tuples ordered by total rank, then lexicographically."""
    total_max = sum(s - 1 for s in sizes)
    for total in range(total_max + 1):
        yield from _combos_with_sum(sizes, total)


def _combos_with_sum(sizes: list[int], total: int):
    if not sizes:
        if total == 0:
            yield ()
        return
    for j in range(min(sizes[0] - 1, total) + 1):
        for rest in _combos_with_sum(sizes[1:], total - j):
            yield (j,) + rest


# ---------------------------------------------------------------------------
# IWN design and correction


def iwn_design_agent(
    plan: FloorPlan,
    planning: PlanningTask,
    backend: str | Callable = "greedy",
    aco_params: AcoParams | None = None,
) -> OptimizationTrace:
    """Optimise the AP deployment for one candidate plan.

    ``backend`` is ``"greedy"``, ``"aco"`` or any proposer callable (for
    example an :class:`llm.LlmProposer`).
    """
    task = replace(planning, plan=plan)
    if backend == "greedy":
        return optimize_loop(task, greedy_worst_point_proposer)
    if backend == "aco":
        return aco_optimize(task, aco_params or AcoParams())
    if callable(backend):
        return optimize_loop(task, backend)
    raise ValueError(f"unknown IWN backend {backend!r}")


def correction_agent(plan: FloorPlan, deployment: Deployment) -> Deployment:
    """Move APs that sit outside the boundary or on a wall to valid spots.

    Valid APs are untouched; others go to the nearest point of a 0.05 m
    local lattice with 0.1 m clearance from every wall and boundary edge.
    """
    fixed = tuple(
        p if position_problem(plan, p) is None else nearest_valid_position(plan, p, clearance=0.1, step=0.05)
        for p in deployment.aps
    )
    return deployment if fixed == deployment.aps else replace(deployment, aps=fixed)


# ---------------------------------------------------------------------------
# evaluation and update


def rationality_checks(plan: FloorPlan, rules: ArchitecturalRules) -> dict[str, bool]:
    kinds = {v.kind for v in validate_plan(plan, rules)}
    return {
        "room anchoring": "RoomAnchorViolation" not in kinds,
        "door rule": not kinds & {"DoorCountViolation", "DoorWidthViolation", "DoorMaterialViolation"},
        "circulation": "CirculationViolation" not in kinds,
        "non-overlap": "RoomOverlapViolation" not in kinds,
    }


def joint_score(
    coverage: float, ap_count: int, checks: dict[str, bool], task: JointDesignTask
) -> JointScore:
    """Weighted wireless-friendliness score of one candidate.

    The coverage term saturates at the coverage target, so among candidates
    that meet it the AP count decides (see the tie-break in
    :func:`evaluation_update_agent`).
    """
    rationality = sum(checks.values()) / len(checks)
    attained = min(coverage / task.coverage_target, 1.0)
    overall = task.w_coverage * attained + task.w_rationality * rationality
    failed = tuple(k for k, ok in checks.items() if not ok)
    eff = iwn_efficiency(coverage, ap_count) if ap_count > 0 else 0.0
    return JointScore(coverage, ap_count, eff, rationality, overall, failed)


def _rank_key(score: JointScore, index: int) -> tuple:
    return (-score.overall, score.ap_count, index)


def evaluation_update_agent(
    candidates: Sequence[tuple[LayoutProposal, OptimizationTrace]],
    task: JointDesignTask,
    round_no: int = 1,
) -> tuple[list[JointScore], GlobalFeedback, int]:
    """Score every candidate, pick the best and write the next round's brief."""
    if not candidates:
        raise ValueError("no candidates to evaluate")
    scores = []
    for proposal, trace in candidates:
        best = trace.best
        coverage = 0.0 if best is None else best.coverage
        n_aps = 0 if best is None else len(best.deployment.aps)
        scores.append(joint_score(coverage, n_aps, rationality_checks(proposal.plan, task.rules), task))
    order = sorted(range(len(scores)), key=lambda i: _rank_key(scores[i], i))
    b, w = order[0], order[-1]
    failed = Counter(c for s in scores for c in s.failed_checks)

    def line(tag: str, i: int) -> str:
        s = scores[i]
        rooms = ", ".join(f"{r.label}@({r.origin.x:g},{r.origin.y:g})" for r in candidates[i][0].plan.rooms)
        return (
            f"{tag} candidate {i}: coverage {100 * s.coverage:.1f}% with {s.ap_count} APs "
            f"(efficiency {100 * s.iwn_efficiency:.1f}%), rationality {s.rationality:.2f}, "
            f"overall {s.overall:.3f}; rooms {rooms}"
        )

    dominant = ", ".join(f"{k} x{n}" for k, n in failed.most_common()) or "none"
    text = "\n".join(
        [f"Round {round_no} of joint design.", line("Best", b), line("Worst", w), f"Failed checks: {dominant}."]
    )
    return scores, GlobalFeedback(text, round_no, candidates[b][0]), b


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class CandidateRecord:
    round: int
    index: int
    layout: str  # fingerprint
    provenance: str
    score: JointScore | None
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        s = self.score
        return {
            "round": self.round,
            "index": self.index,
            "layout": self.layout,
            "provenance": self.provenance,
            "error": self.error,
            "coverage": None if s is None else s.coverage,
            "ap_count": None if s is None else s.ap_count,
            "iwn_efficiency": None if s is None else s.iwn_efficiency,
            "rationality": None if s is None else s.rationality,
            "overall": None if s is None else s.overall,
        }


@dataclass
class RoundRecord:
    round: int
    candidates: list[CandidateRecord]
    feedback: str
    best_overall: float  # best so far, across rounds
    best_ap_count: int


@dataclass
class PipelineResult:
    best: LayoutProposal
    trace: OptimizationTrace
    score: JointScore
    rounds: list[RoundRecord]


def _corrected(plan: FloorPlan, trace: OptimizationTrace, planning: PlanningTask) -> OptimizationTrace:
    """Swap the trace's best deployment for its corrected version if it changed."""
    best = trace.best
    if best is None:
        return trace
    fixed = correction_agent(plan, best.deployment)
    if fixed == best.deployment:
        return trace
    fb = Evaluator(replace(planning, plan=plan)).feedback(fixed, best.feedback.iteration)
    steps = [TraceStep(fixed, fb) if s is best else s for s in trace.steps]
    return replace(trace, steps=steps)


def joint_design_pipeline(
    task: JointDesignTask,
    layout_backend: str = "rule",
    entity_backend: str = "rule",
    iwn_backend: str | Callable = "greedy",
    client: LlmClient | None = None,
    on_round: Callable[[RoundRecord], None] | None = None,
) -> PipelineResult:
    """Run layout -> entity -> IWN -> correction -> evaluation rounds.

    Keeps the best-overall candidate across rounds, so the reported best
    score never decreases from one round to the next.
    """
    feedback: GlobalFeedback | None = None
    best: tuple[LayoutProposal, OptimizationTrace, JointScore] | None = None
    rounds: list[RoundRecord] = []
    for rnd in range(1, task.max_rounds + 1):
        layouts = layout_agent(task, feedback, layout_backend, client, seed=[task.seed, rnd])
        evaluated: list[tuple[LayoutProposal, OptimizationTrace]] = []
        records: list[CandidateRecord] = []
        for i, lay in enumerate(layouts):
            try:
                full = entity_agent(lay, task, entity_backend, client)
            except NoValidDoorPlacement as exc:
                records.append(CandidateRecord(rnd, i, lay.fingerprint(), lay.provenance, None, str(exc)))
                continue
            planning = task.planning_task(full.plan)
            trace = iwn_design_agent(full.plan, planning, iwn_backend)
            trace = _corrected(full.plan, trace, planning)
            evaluated.append((full, trace))
            records.append(CandidateRecord(rnd, i, full.fingerprint(), full.provenance, None))
        if not evaluated:
            raise NoFeasibleLayout(f"round {rnd}: no candidate survived door placement")
        scores, feedback, b = evaluation_update_agent(evaluated, task, rnd)
        scored = iter(scores)
        for rec in records:
            if rec.error is None:
                rec.score = next(scored)
        cand = (evaluated[b][0], evaluated[b][1], scores[b])
        if best is None or _rank_key(cand[2], 0) < _rank_key(best[2], 0):
            best = cand
        # the next round builds on the best layout so far, not just this round's
        feedback = replace(feedback, best=best[0])
        rec = RoundRecord(rnd, records, feedback.text, best[2].overall, best[2].ap_count)
        rounds.append(rec)
        if on_round is not None:
            on_round(rec)
    assert best is not None
    return PipelineResult(best[0], best[1], best[2], rounds)
