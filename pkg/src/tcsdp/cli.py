"""Benchmark CLI.

    bench run --kind pnp --n 6 --noise none --seeds 10 --out results/

runs the given number of seeds of one scenario family, writes
results.csv / results.json (and per-seed progress streams with
--progress), and prints one summary line per run.  Exit code 0 means
every run completed; per-run success flags live in the output files.
"""

from __future__ import annotations

import argparse
import sys

from .bench import ScenarioConfig, run_batch


def _parse_limits(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected SCHED,CHANNEL (two integers)")
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a batch of benchmark scenarios")
    run.add_argument("--kind", required=True, choices=["pnp", "handeye", "dualcal"])
    run.add_argument("--m", type=int, default=0, help="configurations / measurements")
    run.add_argument("--n", type=int, default=0, help="points / features")
    run.add_argument("--noise", default="none", choices=["none", "low", "medium", "high"])
    run.add_argument("--seeds", type=int, default=1, help="number of seeds (0..seeds-1)")
    run.add_argument("--seed-base", type=int, default=0)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--gamma", type=float, default=0.98)
    run.add_argument("--gamma-c", type=float, default=1.0)
    run.add_argument("--gamma-w", type=float, default=1.0, help="dual-cal translation weight")
    run.add_argument(
        "--limits", type=_parse_limits, default=(1000, 200),
        metavar="SCHED,CHANNEL", help="phase iteration limits",
    )
    run.add_argument("--repeat", type=int, default=1, help="extra phase-sequence repeats")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--progress", action="store_true", help="write per-seed progress streams")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "run":  # pragma: no cover - argparse enforces this
        return 2
    configs = [
        ScenarioConfig(
            kind=args.kind,
            seed=args.seed_base + k,
            n=args.n,
            m=args.m,
            noise=args.noise,
            gamma=args.gamma,
            gamma_c=args.gamma_c,
            gamma_w=args.gamma_w,
            sched_limit=args.limits[0],
            channel_limit=args.limits[1],
            repeat=args.repeat,
        )
        for k in range(args.seeds)
    ]
    reports, summary = run_batch(
        configs, parallelism=args.parallel, out_dir=args.out, progress=args.progress
    )
    for r in reports:
        row = r.to_row()
        print(
            f"{row['kind']} seed={row['seed']} rot_err={row['rot_err']:.3e} "
            f"trans_err={row['trans_err']:.3e} eg={row['eg']:.3e} dg={row['dg']:.3e} "
            f"cost={row['cost']:.3e} iters={row['iterations']} success={bool(row['success'])}"
        )
    print(
        f"summary: {summary['successes']}/{summary['runs']} success, "
        f"mean rot_err={summary['mean_rot_err']:.3e}, mean time={summary['mean_time']:.1f}s"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
