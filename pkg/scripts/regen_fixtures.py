"""Regenerate the golden test fixtures under tests/fixtures.

Run only after a deliberate change to the propagation model, the oracle
or the prompt renderer, and review the diff before committing.
"""

import json
from pathlib import Path

from iwnplan.llm import build_prompt, default_knowledge
from iwnplan.optimizers import brute_force_oracle, optimize_loop, greedy_worst_point_proposer
from iwnplan.propagation import compute_grid, coverage_fraction
from iwnplan.scenarios import office_task

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    task = office_task()
    dep = brute_force_oracle(task, 2.0, 2)
    (OUT / "oracle_office_k2.json").write_text(json.dumps({"aps": dep.as_list()}, indent=2) + "\n")

    stats = coverage_fraction(compute_grid(task.plan, dep, task.cell_size), task.threshold)
    (OUT / "office_k2_stats.json").write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")

    trace = optimize_loop(task, greedy_worst_point_proposer)
    bundle = build_prompt(task, trace.steps, default_knowledge())
    (OUT / "office_prompt.txt").write_text(bundle.render())


if __name__ == "__main__":
    main()
