"""End-to-end reproduction runs for the two planning scenarios.

``case1`` compares the feedback-driven greedy proposer with ant colony
search on the office wing; ``case2`` runs joint layout and AP design on the
20 x 10 m office and compares against the fixed baseline layout. Each
returns a list of :class:`Criterion` rows for a pass/fail table.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .agents import JointDesignTask, PipelineResult, joint_design_pipeline
from .optimizers import (
    AcoParams,
    OptimizationTrace,
    aco_optimize,
    greedy_worst_point_proposer,
    minimum_aps_for_target,
    optimize_loop,
)
from .scenarios import CASE2_RADIO, case1_task, office_task


@dataclass(frozen=True)
class Criterion:
    name: str
    passed: bool
    detail: str


@dataclass
class Case1Result:
    greedy: OptimizationTrace
    aco: OptimizationTrace
    criteria: list[Criterion]
    seconds: float


@dataclass
class Case2Result:
    baseline_aps: int | None
    baseline_coverage: float | None
    pipeline: PipelineResult
    criteria: list[Criterion]
    seconds: float


def format_table(criteria: list[Criterion]) -> str:
    width = max(len(c.name) for c in criteria)
    return "\n".join(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.detail}" for c in criteria)


def run_case1(
    coverage_target: float = 0.95,
    threshold: float = 110.0,
    seed: int = 0,
    greedy_budget: int = 10,
    aco_budget: int = 1000,
    min_ratio: float = 10.0,
) -> Case1Result:
    t0 = time.perf_counter()
    task = replace(case1_task(greedy_budget), coverage_target=coverage_target, threshold=threshold)
    greedy = optimize_loop(task, greedy_worst_point_proposer)
    aco = aco_optimize(replace(task, max_iterations=aco_budget), AcoParams(seed=seed))

    g_first = greedy.first_reaching(coverage_target)
    a_first = aco.first_reaching(coverage_target)
    g_ok = g_first is not None and g_first <= greedy_budget
    # an ACO run that never reaches the target still bounds its count from below
    a_count = a_first if a_first is not None else aco_budget + 1
    a_text = str(a_first) if a_first is not None else f">{aco_budget}"
    ratio_ok = g_ok and a_count >= min_ratio * g_first
    criteria = [
        Criterion(
            f"greedy converges within {greedy_budget} iterations",
            g_ok,
            f"first reached {100 * coverage_target:.0f}% at iteration {g_first} "
            f"(best {100 * greedy.best.coverage:.2f}%)" if greedy.best else "no valid step",
        ),
        Criterion(
            f"ACO needs >= {min_ratio:g}x the greedy iterations",
            ratio_ok,
            f"ACO first reached at {a_text}, ratio {a_count / g_first:.1f}x" if g_first else f"ACO first reached at {a_text}",
        ),
    ]
    return Case1Result(greedy, aco, criteria, time.perf_counter() - t0)


def run_case2(
    coverage_target: float = 0.95,
    threshold: float = 80.0,
    seed: int = 0,
    max_rounds: int = 5,
    n_candidates: int = 10,
) -> Case2Result:
    t0 = time.perf_counter()
    base_task = replace(office_task(), coverage_target=coverage_target, threshold=threshold)
    baseline = minimum_aps_for_target(base_task, lattice_spacing=1.0, max_k=base_task.max_aps)
    jt = JointDesignTask(
        coverage_target=coverage_target,
        threshold=threshold,
        seed=seed,
        max_rounds=max_rounds,
        n_candidates=n_candidates,
        radio=CASE2_RADIO,
    )
    result = joint_design_pipeline(jt)
    s = result.score
    overall = [r.best_overall for r in result.rounds]
    monotone = all(b >= a for a, b in zip(overall, overall[1:]))
    base_k = None if baseline is None else baseline[0]
    fewer = s.coverage >= coverage_target and (base_k is None or s.ap_count < base_k)
    base_eff = None if baseline is None else baseline[2] / baseline[0]
    criteria = [
        Criterion(
            f"joint design reaches {100 * coverage_target:.0f}% coverage",
            s.coverage >= coverage_target,
            f"{100 * s.coverage:.2f}% with {s.ap_count} APs",
        ),
        Criterion(
            "fewer APs than the baseline layout",
            fewer,
            f"{s.ap_count} vs baseline {base_k if base_k is not None else f'>{base_task.max_aps}'}"
            + (f"; efficiency {100 * s.iwn_efficiency:.1f}% vs {100 * base_eff:.1f}%" if base_eff else ""),
        ),
        Criterion(
            "best overall score non-decreasing over rounds",
            monotone,
            " ".join(f"{v:.3f}" for v in overall),
        ),
    ]
    return Case2Result(
        base_k, None if baseline is None else baseline[2], result, criteria, time.perf_counter() - t0
    )
