"""Joint layout and AP design on the 20 x 10 m office vs the fixed baseline.

Prints the per-round best score, the final candidate and a pass/fail table.
"""

import argparse

from iwnplan.experiments import format_table, run_case2


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--threshold", type=float, default=80.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rounds", type=int, default=5)
    ap.add_argument("--candidates", type=int, default=10)
    args = ap.parse_args()
    res = run_case2(args.target, args.threshold, args.seed, args.rounds, args.candidates)
    for r in res.pipeline.rounds:
        print(f"round {r.round}: best overall {r.best_overall:.3f} with {r.best_ap_count} APs")
    s = res.pipeline.score
    print(f"final: {100 * s.coverage:.2f}% with {s.ap_count} APs, efficiency {100 * s.iwn_efficiency:.1f}%")
    print(res.pipeline.best.rationale)
    print(format_table(res.criteria))
    print(f"{res.seconds:.1f} s")


if __name__ == "__main__":
    main()
