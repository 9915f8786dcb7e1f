from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iwnplan.agents import (
    GlobalFeedback,
    JointDesignTask,
    LayoutProposal,
    NoFeasibleLayout,
    NoValidDoorPlacement,
    _layout_key,
    correction_agent,
    entity_agent,
    evaluation_update_agent,
    iwn_design_agent,
    iwn_efficiency,
    joint_design_pipeline,
    joint_score,
    layout_agent,
    rationality_checks,
)
from iwnplan.geometry import Point2D, Room, check_circulation, mirror_plan_x, validate_plan
from iwnplan.layout import DoorSpec, OuterDoorSpec
from iwnplan.llm import scripted_proposer
from iwnplan.optimizers import OptimizationTrace, brute_force_oracle
from iwnplan.propagation import Deployment, NoValidPosition, position_problem
from iwnplan.scenarios import empty_room_plan, reference_office_plan

P = Point2D


@pytest.fixture(scope="module")
def task():
    return JointDesignTask()


def test_task_invariants():
    with pytest.raises(ValueError):
        JointDesignTask(w_coverage=0.5, w_rationality=0.4)
    with pytest.raises(ValueError):
        JointDesignTask(w_coverage=1.2, w_rationality=-0.2)
    with pytest.raises(ValueError):
        JointDesignTask(n_candidates=0)


# --- layout agent -----------------------------------------------------------


def test_rooms_larger_than_boundary(task):
    with pytest.raises(NoFeasibleLayout):
        layout_agent(replace(task, room_sizes=((10.0, 10.0),) * 3))


def test_zero_size_boundary(task):
    with pytest.raises(NoFeasibleLayout):
        layout_agent(replace(task, width=0.0))


def test_ten_distinct_valid_layouts(task):
    props = layout_agent(task, seed=0)
    assert len(props) == 10
    assert len({_layout_key(p.plan.rooms) for p in props}) == 10
    for p in props:
        assert validate_plan(p.plan, task.rules.without_doors()) == []
        assert len(p.plan.rooms) == 4


def test_layouts_are_seeded(task):
    a = [p.plan for p in layout_agent(task, seed=7)]
    b = [p.plan for p in layout_agent(task, seed=7)]
    c = [p.plan for p in layout_agent(task, seed=8)]
    assert a == b
    assert a != c


def test_feedback_mutates_previous_best(task):
    best = layout_agent(task, seed=0)[0]
    fb = GlobalFeedback("round 1", 1, best)
    props = layout_agent(task, fb, seed=1)
    keys = {_layout_key(p.plan.rooms) for p in props}
    assert _layout_key(best.plan.rooms) not in keys
    moved = [p for p in props if p.rationale.startswith("moved room")]
    assert moved
    for p in moved:
        # a mutation changes exactly one room
        same = sum(a == b for a, b in zip(p.plan.rooms, best.plan.rooms))
        assert same == 3


class FakeClient:
    """Stands in for LlmClient: returns scripted replies and records prompts."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, bundle, max_attempts=None):
        self.prompts.append(bundle)
        return self.replies[min(len(self.prompts) - 1, len(self.replies) - 1)]


def _rooms_json(rooms):
    import json

    return json.dumps({"rooms": [{"label": l, "x": x, "y": y, "width": w, "depth": d} for l, x, y, w, d in rooms]})


def test_llm_layout_follows_scripted_change(task):
    before = [("A", 16, 0, 4, 3), ("B", 0, 0, 4, 3), ("C", 0, 7, 4, 3), ("D", 16, 7, 4, 3)]
    # the scripted model answers "move room A off the east wall"
    after = [("A", 8, 0, 4, 3)] + before[1:]
    fb = GlobalFeedback("move room A off the east wall", 1, None)
    client = FakeClient([_rooms_json(after)])
    props = layout_agent(replace(task, n_candidates=1), fb, backend="llm", client=client)
    assert props[0].provenance == "layout-agent/llm"
    a = next(r for r in props[0].plan.rooms if r.label == "A")
    assert (a.origin.x, a.origin.y) == (8, 0)
    assert "move room A off the east wall" in client.prompts[0].perception


def test_llm_layout_falls_back_after_repeated_failures(task):
    client = FakeClient(["I cannot do that."])
    props = layout_agent(replace(task, n_candidates=2), backend="llm", client=client, max_retries=1)
    assert len(props) == 2
    assert all(p.provenance == "layout-agent/rule-fallback" for p in props)
    assert len(client.prompts) == 4
    assert "rejected" in client.prompts[1].perception


def test_llm_layout_rejects_overlap(task):
    bad = [("A", 0, 0, 4, 3), ("B", 2, 0, 4, 3), ("C", 0, 7, 4, 3), ("D", 16, 7, 4, 3)]
    client = FakeClient([_rooms_json(bad)])
    props = layout_agent(replace(task, n_candidates=1), backend="llm", client=client, max_retries=0)
    assert props[0].provenance == "layout-agent/rule-fallback"


# --- entity agent -----------------------------------------------------------


def _bare(task, rooms):
    return LayoutProposal(task.build_plan(rooms), "test")


def test_corner_room_gets_door_on_interior_wall(task):
    t = replace(task, room_sizes=((4.0, 3.0),))
    out = entity_agent(_bare(t, [Room(P(0, 0), 4, 3, "A")]), t)
    room_doors = [o for o in out.plan.openings if o.host_wall >= 4]
    assert len(room_doors) == 1
    w = out.plan.walls[room_doors[0].host_wall]
    # the interior walls of a south-west corner room are x = 4 and y = 3
    assert (w.start.x == w.end.x == 4.0) or (w.start.y == w.end.y == 3.0)


def test_reference_layout_gets_four_doors_and_circulates(task):
    rooms = reference_office_plan().rooms
    out = entity_agent(_bare(task, rooms), task)
    doors = [o for o in out.plan.openings if o.kind == "door"]
    assert len(doors) == 5  # four rooms plus the outer door
    assert check_circulation(out.plan)
    assert validate_plan(out.plan) == []


def test_every_door_is_point_eight_wood(task):
    for prop in layout_agent(task, seed=0)[:4]:
        out = entity_agent(prop, task)
        for o in out.plan.openings[1:]:
            assert o.width == 0.8 and o.material == "wood"


def test_enclosed_room_has_no_door_placement(task):
    # B's only interior edges touch A and the boundary, leaving no free wall
    t = replace(task, room_sizes=((4.0, 3.0), (4.0, 10.0)), width=8.0, outer_door=OuterDoorSpec("N", 6.0))
    rooms = [Room(P(0, 0), 4, 3, "A"), Room(P(4, 0), 4, 10, "B")]
    with pytest.raises(NoValidDoorPlacement):
        entity_agent(_bare(t, rooms), t)


# --- IWN design and correction ----------------------------------------------


def test_iwn_agent_near_oracle_on_empty_office(task):
    plan = empty_room_plan()
    planning = replace(task.planning_task(plan), max_aps=1, coverage_target=1.0, threshold=70.0, max_iterations=30)
    trace = iwn_design_agent(plan, planning, "greedy")
    oracle = brute_force_oracle(planning, 1.0, 1)
    from iwnplan.optimizers import Evaluator

    ocov = Evaluator(planning).feedback(oracle, 1).coverage
    assert trace.best.coverage >= ocov - 0.01


def test_iwn_agent_scripted_single_step(task):
    plan = reference_office_plan()
    planning = replace(task.planning_task(plan), max_iterations=1)
    trace = iwn_design_agent(plan, planning, scripted_proposer([Deployment.of((10, 5), config=task.radio)]))
    assert len(trace.steps) == 1


def test_mirrored_layouts_score_equal(task):
    plan = reference_office_plan()
    mirrored = mirror_plan_x(plan)
    planning = replace(task.planning_task(plan), max_iterations=1)
    a = iwn_design_agent(plan, planning, "greedy")
    b = iwn_design_agent(mirrored, planning, "greedy")
    assert abs(a.best.coverage - b.best.coverage) <= 1e-9


def test_correction_identity_on_valid(office):
    d = Deployment.of((9, 5), (3, 5))
    assert correction_agent(office, d) is d


def test_correction_snaps_outside_ap(office):
    d = correction_agent(office, Deployment.of((20.2, 5.0)))
    (p,) = d.aps
    assert office.boundary.x1 - p.x >= 0.1 - 1e-9
    assert p.x == pytest.approx(19.9, abs=1e-9)
    assert p.y == 5.0


def test_correction_moves_ap_off_wall(office):
    d = correction_agent(office, Deployment.of((5.0, 3.0)))  # on room A's north wall, east of its door
    (p,) = d.aps
    assert position_problem(office, p, clearance=0.1 - 1e-9) is None
    assert p.dist(P(5.0, 3.0)) == pytest.approx(0.1, abs=1e-9)


def test_correction_degenerate_plan_raises():
    from iwnplan.geometry import Boundary, FloorPlan, default_materials, rect_walls

    b = Boundary(P(0, 0), 0.15, 0.15)
    plan = FloorPlan(b, default_materials(), tuple(rect_walls(b, "concrete")), (), ())
    with pytest.raises(NoValidPosition):
        correction_agent(plan, Deployment.of((0.0, 0.0)))


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-2, 22), st.floats(-2, 12)), min_size=1, max_size=3))
def test_correction_idempotent_and_valid(pts):
    office = _OFFICE
    once = correction_agent(office, Deployment.of(*pts))
    assert correction_agent(office, once) == once
    for p in once.aps:
        assert position_problem(office, p) is None


_OFFICE = reference_office_plan()


# --- evaluation -------------------------------------------------------------


def test_efficiency_arithmetic():
    assert iwn_efficiency(0.954, 2) == 0.477
    assert iwn_efficiency(0.956, 3) == pytest.approx(0.31867, abs=1e-5)


def _cut_plan(task):
    """One room spanning the full depth; its only door faces away from the outer door."""
    t = replace(task, width=8.0, depth=3.0, room_sizes=((3.0, 3.0),))
    return t, t.build_plan((Room(P(3, 0), 3, 3, "A"),), (DoorSpec("A", "E", 1.5),))


def test_failing_circulation_only_gives_three_quarters(task):
    t, plan = _cut_plan(task)
    checks = rationality_checks(plan, t.rules)
    assert checks == {"room anchoring": True, "door rule": True, "circulation": False, "non-overlap": True}
    s = joint_score(0.9, 1, checks, t)
    assert s.rationality == 0.75
    assert s.failed_checks == ("circulation",)


def test_shared_wall_door_counts_for_both_rooms(task):
    t = replace(task, room_sizes=((3.0, 3.0), (3.0, 3.0)))
    rooms = (Room(P(0, 0), 3, 3, "B"), Room(P(3, 0), 3, 3, "A"))
    plan = t.build_plan(rooms, (DoorSpec("B", "E", 1.5), DoorSpec("A", "W", 1.5)))
    assert not rationality_checks(plan, t.rules)["door rule"]


def test_score_formula(task):
    ok = dict.fromkeys(("room anchoring", "door rule", "circulation", "non-overlap"), True)
    s = joint_score(0.76, 2, ok, task)
    assert s.overall == pytest.approx(0.7 * 0.8 + 0.3)
    # the coverage term saturates at the target
    assert joint_score(0.99, 2, ok, task).overall == joint_score(0.95, 2, ok, task).overall == 1.0


@settings(max_examples=200)
@given(st.floats(0, 1), st.integers(1, 8))
def test_efficiency_exact(cov, n):
    ok = dict.fromkeys(("room anchoring", "door rule", "circulation", "non-overlap"), True)
    assert joint_score(cov, n, ok, JointDesignTask()).iwn_efficiency == cov / n


def _trace_with(plan, radio, cov_aps):
    """A one-step trace whose best step has ``cov_aps`` = (coverage, ap count)."""
    from iwnplan.optimizers import Feedback, TraceStep
    from iwnplan.propagation import CoverageStats

    cov, n = cov_aps
    dep = Deployment(tuple(P(1.0 + i, 1.0) for i in range(n)), radio)
    stats = CoverageStats(cov, 80.0, 0, 1, P(0, 0), 0.0)
    return OptimizationTrace("x", "t", [TraceStep(dep, Feedback(1, stats))], "converged")


def test_best_prefers_fewer_aps_on_tie(task):
    plan = entity_agent(_bare(task, reference_office_plan().rooms), task).plan
    prop = LayoutProposal(plan, "t")
    cands = [(prop, _trace_with(plan, task.radio, (0.956, 3))), (prop, _trace_with(plan, task.radio, (0.954, 2)))]
    scores, fb, best = evaluation_update_agent(cands, task)
    assert best == 1
    assert scores[1].iwn_efficiency == 0.477
    assert "Best candidate 1" in fb.text and "Worst candidate 0" in fb.text
    assert fb.best is prop


def test_index_breaks_remaining_ties(task):
    plan = entity_agent(_bare(task, reference_office_plan().rooms), task).plan
    prop = LayoutProposal(plan, "t")
    cands = [(prop, _trace_with(plan, task.radio, (0.96, 2)))] * 3
    assert evaluation_update_agent(cands, task)[2] == 0


def test_feedback_names_failed_checks(task):
    t, plan = _cut_plan(task)
    _, fb, _ = evaluation_update_agent([(LayoutProposal(plan, "t"), _trace_with(plan, t.radio, (0.9, 1)))], t)
    assert "circulation x1" in fb.text


def test_empty_candidates_rejected(task):
    with pytest.raises(ValueError):
        evaluation_update_agent([], task)


# --- pipeline ---------------------------------------------------------------


def test_single_round_single_candidate(task):
    res = joint_design_pipeline(replace(task, n_candidates=1, max_rounds=1))
    assert len(res.rounds) == 1
    assert len(res.rounds[0].candidates) == 1


def test_pipeline_monotone_over_three_rounds(task):
    res = joint_design_pipeline(replace(task, max_rounds=3))
    seq = [(r.best_overall, -r.best_ap_count) for r in res.rounds]
    assert seq == sorted(seq)
    for r in res.rounds:
        for c in r.candidates:
            assert c.score is None or c.score.iwn_efficiency == c.score.coverage / c.score.ap_count
    assert validate_plan(res.best.plan) == [] and check_circulation(res.best.plan)


def test_pipeline_zero_boundary(task):
    with pytest.raises(NoFeasibleLayout):
        joint_design_pipeline(replace(task, depth=0.0))


def test_coverage_only_weighting_picks_max_overall(task):
    t = replace(task, w_coverage=1.0, w_rationality=0.0, max_rounds=1)
    res = joint_design_pipeline(t)
    scored = [c.score for c in res.rounds[0].candidates if c.score is not None]
    assert res.score.overall == max(s.overall for s in scored)
    assert res.score.ap_count == min(s.ap_count for s in scored if s.overall == res.score.overall)
