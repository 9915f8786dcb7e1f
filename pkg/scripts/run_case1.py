"""Greedy proposer vs ant colony search on the office wing.

Prints the iteration at which each first reaches the coverage target and a
pass/fail table. Takes about half a minute.
"""

import argparse

from iwnplan.experiments import format_table, run_case1


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--threshold", type=float, default=110.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--aco-budget", type=int, default=1000)
    args = ap.parse_args()
    res = run_case1(args.target, args.threshold, args.seed, aco_budget=args.aco_budget)
    print(f"greedy: {res.greedy.outcome} after {len(res.greedy.steps)} iterations, best {100 * res.greedy.best.coverage:.2f}%")
    first = res.aco.first_reaching(args.target)
    print(f"aco:    first reached target at {first if first else 'never'}, best {100 * res.aco.best.coverage:.2f}%")
    print(format_table(res.criteria))
    print(f"{res.seconds:.1f} s")


if __name__ == "__main__":
    main()
