#!/usr/bin/env python3
"""Summarize a refinement progress stream (NDJSON, one record per
iteration) into per-phase cost / eigenvalue-sum tables on stdout.

The streams, written by `bench run --progress`, are plot-ready: each
record has k, phase, cost, lam1 (total eigenvalue sum), per-group sums,
and the eigenvalue gap, so any plotting tool can draw the phase curves
directly.
"""

import argparse
import json


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("stream", help="progress NDJSON file")
    parser.add_argument("--every", type=int, default=10, help="print every k-th record")
    args = parser.parse_args()

    records = [json.loads(line) for line in open(args.stream) if line.strip()]
    if not records:
        print("empty stream")
        return
    print(f"{'k':<7}{'phase':<13}{'cost':<14}{'lam1':<14}{'eg':<14}{'sigma'}")
    for rec in records:
        if rec["k"] % args.every and rec is not records[-1]:
            continue
        sigma = rec.get("sigma")
        print(
            f"{rec['k']:<7}{rec['phase']:<13}{rec['cost']:<14.4e}"
            f"{rec['lam1']:<14.6f}{rec['eg']:<14.4e}{'' if sigma is None else f'{sigma:.2e}'}"
        )
    phases = {}
    for rec in records:
        phases.setdefault(rec["phase"], []).append(rec["cost"])
    print("\nper-phase cost (first -> last):")
    for phase, costs in phases.items():
        print(f"  {phase:<13}{costs[0]:>12.4e} -> {costs[-1]:>12.4e}  ({len(costs)} iters)")


if __name__ == "__main__":
    main()
