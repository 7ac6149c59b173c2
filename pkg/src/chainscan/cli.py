"""Command-line front end.

Benchmark mode (default):

    chainscan --algo chained --dtype i32 --op add --n 1048576 --runs 3

times the chosen algorithm over each --n, validates against the sequential
oracle, and writes CSV (or JSON) records to stdout or --output.

Scheduler simulation:

    chainscan simulate --blocks 64 --resident 4 --policy one-to-one --seeds 1000

prints the deadlock fraction over seeded admission orders and, when any run
deadlocks, a replay-verified witness trace.

Exit codes: 0 success, 1 validation or liveness failure, 2 usage error,
3 output I/O error. CHAINSCAN_WORKERS sets the default worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from . import __version__
from .bench import ALGORITHMS, DEFAULT_NS, PAPER_NS, run_bench, write_records
from .chained import LivenessError, ProtocolViolation, default_worker_count
from .operators import DTYPES, OPERATOR_NAMES
from .reference import ShapeError
from .schedsim import SimConfig, format_trace, sweep_deadlocks
from .warp import WarpGeometry

WORKERS_ENV = "CHAINSCAN_WORKERS"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="chainscan",
        description="Single-pass chained scan benchmarks and scheduler simulation.",
    )
    p.add_argument("--version", action="version", version=f"chainscan {__version__}")
    p.add_argument("--algo", choices=ALGORITHMS, default="chained",
                   help="scan algorithm to run (default: chained)")
    p.add_argument("--dtype", choices=sorted(DTYPES), default="i32",
                   help="element type (default: i32)")
    p.add_argument("--op", choices=OPERATOR_NAMES, default="add",
                   help="binary operator (default: add)")
    p.add_argument("--n", action="append", type=int, metavar="N",
                   help="input length; repeatable (default: 2^20..2^26)")
    p.add_argument("--n-preset", choices=["paper"],
                   help="use the published measurement sizes (32M..512M)")
    p.add_argument("--workers", type=int, default=None, metavar="B",
                   help=f"chained worker count (default: ${WORKERS_ENV} "
                        "or the CPU count)")
    p.add_argument("--warp-width", type=int, default=32, metavar="W",
                   help="lanes per warp, power of two in [2, 64] (default: 32)")
    p.add_argument("--k", type=int, default=8, metavar="K",
                   help="registers per lane (default: 8)")
    p.add_argument("--warps-per-block", type=int, default=32, metavar="WPB",
                   help="warps per block, at most W (default: 32)")
    p.add_argument("--runs", type=int, default=3,
                   help="timed repetitions per size; best is reported (default: 3)")
    p.add_argument("--seed", type=int, default=0,
                   help="input generator seed (default: 0)")
    p.add_argument("--in-place", action="store_true",
                   help="scan into the input buffer instead of a fresh output")
    p.add_argument("--no-validate", action="store_true",
                   help="skip oracle validation of results")
    p.add_argument("--output", metavar="PATH",
                   help="write records to PATH instead of stdout")
    p.add_argument("--format", choices=["csv", "json"], default="csv",
                   help="record format (default: csv)")
    p.add_argument("--block-scan-mode", choices=["vectorized", "warp-model"],
                   default="vectorized",
                   help="chained block-local scan implementation (default: vectorized)")
    p.add_argument("--inject-slot-fault", type=int, default=None,
                   metavar="SLOT", help=argparse.SUPPRESS)

    sub = p.add_subparsers(dest="command")
    sim = sub.add_parser("simulate",
                         help="run the residency/deadlock scheduler model")
    sim.add_argument("--blocks", type=int, required=True, metavar="M",
                     help="number of chained blocks")
    sim.add_argument("--resident", type=int, required=True, metavar="R",
                     help="residency slots (blocks that can run at once)")
    sim.add_argument("--policy", required=True, metavar="POLICY",
                     help="one-to-one, or cyclic:B for B persistent workers")
    sim.add_argument("--seeds", type=int, default=1000,
                     help="number of seeded schedules to run (default: 1000)")
    sim.add_argument("--seed0", type=int, default=0,
                     help="first seed (default: 0)")
    return p


def resolve_workers(value: Optional[int]) -> int:
    """CLI flag wins, then CHAINSCAN_WORKERS, then the CPU count."""
    if value is not None:
        return value
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return default_worker_count()


def _usage(msg: str) -> int:
    print(f"chainscan: error: {msg}", file=sys.stderr)
    return 2


def parse_policy(text: str):
    """'one-to-one' -> (policy, None); 'cyclic:B' -> (policy, B)."""
    if text == "one-to-one":
        return "one-to-one", None
    if text.startswith("cyclic:"):
        try:
            return "cyclic", int(text.split(":", 1)[1])
        except ValueError:
            pass
    raise ValueError(f"bad policy {text!r}; expected one-to-one or cyclic:B")


def run_simulate(args) -> int:
    try:
        policy, b = parse_policy(args.policy)
        SimConfig(m=args.blocks, r=args.resident, policy=policy, b=b)
    except ValueError as exc:
        return _usage(str(exc))
    result = sweep_deadlocks(args.blocks, args.resident, policy=policy, b=b,
                             seeds=args.seeds, seed0=args.seed0)
    print(f"deadlock_fraction={result.fraction:.3f}")
    print(f"runs={result.runs} deadlocks={result.deadlocks} "
          f"policy={args.policy} blocks={args.blocks} resident={args.resident}")
    if result.witness is not None:
        w = result.witness
        print(f"witness seed={w.seed} "
              f"verified={'true' if result.witness_verified else 'false'}")
        print(format_trace(w))
        for blk in w.blocked_set:
            print(f"blocked block={blk} waits_on={blk - 1}")
    return 0


def run_benchmark(args) -> int:
    try:
        workers = resolve_workers(args.workers)
    except ValueError as exc:
        return _usage(str(exc))
    if workers < 1:
        return _usage(f"--workers must be >= 1, got {workers}")
    if args.runs < 1:
        return _usage(f"--runs must be >= 1, got {args.runs}")
    ns = list(args.n) if args.n else []
    if args.n_preset == "paper":
        ns += PAPER_NS
    if not ns:
        ns = list(DEFAULT_NS)
    if any(n < 0 for n in ns):
        return _usage("--n must be >= 0")
    try:
        geometry = WarpGeometry(w=args.warp_width, k=args.k,
                                warps_per_block=args.warps_per_block)
    except ShapeError as exc:
        return _usage(str(exc))
    try:
        records = run_bench(
            args.algo, args.dtype, args.op, ns, runs=args.runs, seed=args.seed,
            workers=workers, geometry=geometry, in_place=args.in_place,
            validate=not args.no_validate, block_scan_mode=args.block_scan_mode,
            corrupt_slot=args.inject_slot_fault,
        )
    except (LivenessError, ProtocolViolation) as exc:
        print(f"chainscan: {exc}", file=sys.stderr)
        return 1
    except ShapeError as exc:
        return _usage(str(exc))
    try:
        if args.output:
            with open(args.output, "w", newline="") as fh:
                write_records(records, fh, args.format)
        else:
            write_records(records, sys.stdout, args.format)
    except OSError as exc:
        print(f"chainscan: cannot write {args.output!r}: {exc}", file=sys.stderr)
        return 3
    failed = [r for r in records if r.validated == "false"]
    for rec in failed:
        print(f"chainscan: {rec.algorithm} n={rec.n}: {rec.failure}",
              file=sys.stderr)
    return 1 if failed else 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return run_simulate(args)
    return run_benchmark(args)


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
