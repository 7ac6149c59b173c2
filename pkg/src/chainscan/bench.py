"""Benchmark and validation harness behind the CLI.

Runs one algorithm over one dtype/operator and a list of input sizes,
timing each size best-of-R, validating against the sequential oracle, and
emitting one record per size as CSV or JSON. Throughput is reported in
billions of elements per second (n / best_seconds * 1e-9).

Validation policy: integer results and float max/min must match the oracle
exactly. Float add tolerates blockwise-refold rounding through a running
envelope: |y[j] - y_ref[j]| <= eps_rel * sum_{i<=j} |x[i]| with eps_rel
1e-5 for f32 and 1e-12 for f64 (envelope accumulated in float64).
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .chained import ChainConfig, chained_scan, default_geometry, default_worker_count
from .operators import dtype_token, make_operator, parse_dtype
from .reference import (
    ScanProblem,
    hillis_steele_scan,
    matrix_scan,
    sequential_scan,
    work_efficient_scan,
)
from .warp import WarpGeometry

ALGORITHMS = ("sequential", "hillis-steele", "blelloch", "matrix", "chained")

CSV_COLUMNS = [
    "algorithm", "dtype", "op", "n", "workers", "warp_width", "k",
    "warps_per_block", "runs", "best_seconds", "mean_seconds", "geps",
    "validated", "in_place",
]

# input sizes used in the original measurements: 32M..512M decimal elements
PAPER_NS = [32_000_000, 64_000_000, 128_000_000, 256_000_000, 512_000_000]

DEFAULT_NS = [2 ** 20, 2 ** 22, 2 ** 24, 2 ** 26]

FLOAT_EPS_REL = {"f32": 1e-5, "f64": 1e-12}


@dataclass
class BenchRecord:
    algorithm: str
    dtype: str
    op: str
    n: int
    workers: int
    warp_width: int
    k: int
    warps_per_block: int
    runs: int
    best_seconds: float
    mean_seconds: float
    geps: float
    validated: str  # "true" | "false" | "skipped"
    in_place: str  # "true" | "false"
    failure: Optional[str] = None  # validation detail, not a CSV column

    def to_row(self) -> list:
        return [getattr(self, col) for col in CSV_COLUMNS]

    def to_dict(self) -> dict:
        return {col: getattr(self, col) for col in CSV_COLUMNS}


def generate_input(n: int, dtype, seed) -> np.ndarray:
    """Deterministic input: full-range integers, or floats uniform in [-1, 1].

    seed may be an int or a sequence of ints (a whole seed path).
    """
    dtype = parse_dtype(dtype)
    rng = np.random.default_rng(seed)
    if dtype.kind == "i":
        info = np.iinfo(dtype)
        return rng.integers(info.min, info.max, size=n, dtype=dtype, endpoint=True)
    return rng.uniform(-1.0, 1.0, size=n).astype(dtype)


def float_add_envelope(x: np.ndarray, eps_rel: float) -> np.ndarray:
    """Pointwise tolerance eps_rel * cumulative sum of |x|, in float64."""
    return eps_rel * np.add.accumulate(np.abs(x, dtype=np.float64))


def validate_output(x: np.ndarray, y: np.ndarray, op) -> Optional[str]:
    """Check y against the sequential oracle; None if ok, else a message."""
    ref = sequential_scan(ScanProblem(x, op))
    if op.dtype.kind == "i" or op.name in ("max", "min"):
        if np.array_equal(ref, y):
            return None
        bad = np.nonzero(ref != y)[0]
        j = int(bad[0])
        return (f"validation failed at index {j}/{y.size}: "
                f"expected {ref[j]!r}, got {y[j]!r} ({bad.size} mismatches)")
    eps_rel = FLOAT_EPS_REL["f32" if op.dtype.itemsize == 4 else "f64"]
    tol = float_add_envelope(x, eps_rel)
    err = np.abs(y.astype(np.float64) - ref.astype(np.float64))
    bad = np.nonzero(err > tol)[0]
    if bad.size == 0:
        return None
    j = int(bad[0])
    return (f"validation failed at index {j}/{y.size}: "
            f"|{y[j]!r} - {ref[j]!r}| = {err[j]:.3e} > tol {tol[j]:.3e} "
            f"({bad.size} indices out of envelope)")


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def run_algorithm(name: str, problem: ScanProblem,
                  chain_config: Optional[ChainConfig] = None,
                  rows: Optional[int] = None) -> np.ndarray:
    """Dispatch one scan by algorithm name.

    The tree scan needs a power-of-two length, so this caller pads with the
    identity and truncates the result; everything else takes n as is.
    """
    if name == "sequential":
        return sequential_scan(problem)
    if name == "hillis-steele":
        return hillis_steele_scan(problem)
    if name == "blelloch":
        n = problem.x.size
        if n == 0 or not (n & (n - 1)):
            return work_efficient_scan(problem)
        padded = np.full(next_pow2(n), problem.op.identity, dtype=problem.op.dtype)
        padded[:n] = problem.x
        full = work_efficient_scan(ScanProblem(padded, problem.op))
        out = problem.resolve_out()
        out[:] = full[:n]
        return out
    if name == "matrix":
        return matrix_scan(problem, rows=rows)
    if name == "chained":
        return chained_scan(problem, chain_config)
    raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


def bench_one(algo: str, op, x: np.ndarray, runs: int,
              chain_config: Optional[ChainConfig] = None,
              in_place: bool = False, validate: bool = True) -> BenchRecord:
    """Time one (algorithm, input) cell best-of-runs and validate the result."""
    times = []
    y = None
    for _ in range(max(1, runs)):
        if in_place:
            work = x.copy()
            problem = ScanProblem(work, op, out=work)
        else:
            problem = ScanProblem(x, op)
        t0 = time.perf_counter()
        y = run_algorithm(algo, problem, chain_config=chain_config)
        times.append(time.perf_counter() - t0)
    best = min(times)
    verdict = "skipped"
    failure = None
    if validate:
        failure = validate_output(x, y, op)
        verdict = "false" if failure else "true"
    geometry = (chain_config.geometry if chain_config and chain_config.geometry
                else default_geometry())
    workers = chain_config.b if (algo == "chained" and chain_config) else 1
    record = BenchRecord(
        algorithm=algo,
        dtype=dtype_token(op.dtype),
        op=op.name,
        n=int(x.size),
        workers=workers,
        warp_width=geometry.w,
        k=geometry.k,
        warps_per_block=geometry.warps_per_block,
        runs=max(1, runs),
        best_seconds=best,
        mean_seconds=sum(times) / len(times),
        geps=(x.size / best) * 1e-9 if best > 0 else 0.0,
        validated=verdict,
        in_place="true" if in_place else "false",
        failure=failure,
    )
    return record


def run_bench(algo: str, dtype_token: str, op_name: str, ns: Sequence[int],
              runs: int = 3, seed: int = 0, workers: Optional[int] = None,
              geometry: Optional[WarpGeometry] = None, in_place: bool = False,
              validate: bool = True, block_scan_mode: str = "vectorized",
              corrupt_slot: Optional[int] = None) -> List[BenchRecord]:
    """Benchmark one algorithm across input sizes; one record per size."""
    op = make_operator(op_name, dtype_token)
    chain_config = ChainConfig(
        b=workers if workers is not None else default_worker_count(),
        geometry=geometry,
        block_scan_mode=block_scan_mode,
        corrupt_slot=corrupt_slot,
    )
    records = []
    for n in ns:
        x = generate_input(n, op.dtype, [seed, n])
        records.append(bench_one(algo, op, x, runs, chain_config=chain_config,
                                 in_place=in_place, validate=validate))
    return records


def write_records(records: Sequence[BenchRecord], stream, fmt: str = "csv") -> None:
    if fmt == "csv":
        writer = csv.writer(stream)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.to_row())
    elif fmt == "json":
        json.dump([rec.to_dict() for rec in records], stream, indent=2)
        stream.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def format_records(records: Sequence[BenchRecord], fmt: str = "csv") -> str:
    buf = io.StringIO()
    write_records(records, buf, fmt)
    return buf.getvalue()
