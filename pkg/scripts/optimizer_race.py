#!/usr/bin/env python3
"""Compare the off-policy and on-policy fitters on the same worlds.

Emits one row per (seed, method, rollout budget): iterations, roll-out
samples consumed, and the final policy distance to the closed form.  The
regression route always reports zero samples; the point of the comparison
is how many roll-outs the on-policy route burns for the same accuracy.

    python scripts/optimizer_race.py --seeds 5 --out race.csv
"""

import argparse
import csv

from xlconsist.optim import (
    METHOD_DCO,
    METHOD_REINFORCE,
    OptimizerConfig,
    fit_dco,
    fit_pco_reinforce,
)
from xlconsist.scenario import GeneratorConfig, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--prompts", type=int, default=4)
    parser.add_argument("--cands", type=int, default=4)
    parser.add_argument("--iters", type=int, default=2000)
    parser.add_argument("--rollouts", type=int, nargs="+", default=[16, 64, 256])
    parser.add_argument("--out", default="optimizer_race.csv")
    args = parser.parse_args()

    rows = []
    for seed in range(args.seeds):
        s = generate(GeneratorConfig(
            n_langs=2, n_prompts=args.prompts, n_candidates=args.cands, seed=seed))
        _, trace = fit_dco(s, OptimizerConfig(method=METHOD_DCO))
        rows.append({
            "seed": seed, "method": "dco", "rollouts": 0,
            "iterations": len(trace.rows), "samples": trace.total_samples,
            "final_tv": trace.final_tv,
        })
        for rollouts in args.rollouts:
            _, trace = fit_pco_reinforce(s, OptimizerConfig(
                method=METHOD_REINFORCE, step_size=0.15, max_iters=args.iters,
                batch=2 * args.prompts, rollouts=rollouts, seed=seed))
            rows.append({
                "seed": seed, "method": "pco-reinforce", "rollouts": rollouts,
                "iterations": len(trace.rows), "samples": trace.total_samples,
                "final_tv": trace.final_tv,
            })

    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
