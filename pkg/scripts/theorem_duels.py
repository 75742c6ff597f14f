#!/usr/bin/env python3
"""Run the four headline instance families through both solution routes
and print one verdict line per instance.

Usage: python scripts/theorem_duels.py [--seed N] [--trials N] [--out DIR]
"""

import argparse
import pathlib
import sys

from lowrank_duel.cli import ExperimentConfig, run_duel, write_duel_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--out", type=str, default=None)
    args = ap.parse_args()

    configs = [
        ExperimentConfig(family="chain", seed=args.seed, trials=args.trials,
                         n_values=(4, 5, 6, 7, 8), instances_per_size=2),
        ExperimentConfig(family="cycle", seed=args.seed, trials=args.trials,
                         n_values=(3, 5, 7), instances_per_size=2),
        ExperimentConfig(family="low_complexity", seed=args.seed,
                         trials=2 * args.trials, m=7, r=1, instances_per_size=2),
        ExperimentConfig(family="perturbed_op", seed=args.seed, trials=args.trials,
                         n_values=(3, 4), epsilon=0.01, instances_per_size=2),
    ]
    all_ok = True
    for cfg in configs:
        records = run_duel(cfg)
        if args.out:
            out = pathlib.Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_duel_csv(out / f"duel_{cfg.family}.csv", cfg, records)
        for rec in records:
            print(f"[{cfg.family}] {rec.instance_id}: sdp_recovered={rec.sdp_recovered} "
                  f"trace_gap={rec.sdp_trace_gap:+.4f} bm_success={rec.bm_success_rate:.2f} "
                  f"spurious_clusters={rec.bm_spurious_clusters} ok={rec.expectation_ok}")
        all_ok &= all(r.expectation_ok for r in records)
    print("all expectations met" if all_ok else "EXPECTATION VIOLATED")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
