"""Single-pass chained inclusive scan, reference scans, and a scheduler model.

The library is organized by level:

  operators   binary associative operators (add/max/min over i32/i64/f32/f64)
              behind a small protocol (apply/combine/accumulate), plus an
              application counter for work measurements.
  reference   sequential oracle, doubling scan, work-efficient tree scan,
              and the matrix formulation.
  warp        the virtual-warp register-matrix block scan (shuffle-up rows,
              per-warp folds, block-level aux scan).
  chained     the single-pass pipeline: persistent workers, cyclic block
              ownership, write-once communication slots, spin policies.
  schedsim    residency/deadlock model explaining why cyclic ownership is
              safe where one-block-per-unit scheduling is not.
  bench       timing, validation, and CSV/JSON records; cli wires it all to
              the `chainscan` command.
"""

from .operators import (
    CountingOperator,
    DTYPES,
    OPERATOR_NAMES,
    ScanOperator,
    UnsupportedOperatorError,
    dtype_token,
    make_operator,
    parse_dtype,
)
from .reference import (
    ScanProblem,
    ShapeError,
    balanced_rows,
    down_sweep,
    hillis_steele_scan,
    matrix_scan,
    sequential_scan,
    up_sweep,
    work_efficient_scan,
)
from .warp import (
    WarpGeometry,
    intra_block_global_scan,
    intra_block_local_scan,
    intra_warp_local_scan,
    shuffle_up_scan,
    warp_load,
)
from .chained import (
    ChainConfig,
    CommSlots,
    LivenessError,
    ProtocolViolation,
    SpinPolicy,
    block_count,
    chained_scan,
    default_geometry,
    default_worker_count,
    inter_block_comm,
    partial_tail,
)
from .schedsim import (
    SimConfig,
    SimOutcome,
    SweepResult,
    deadlock_probability_sweep,
    format_trace,
    run_schedule,
    sweep_deadlocks,
    verify_deadlock,
)
from .bench import (
    ALGORITHMS,
    BenchRecord,
    CSV_COLUMNS,
    generate_input,
    run_algorithm,
    run_bench,
    validate_output,
    write_records,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BenchRecord",
    "CSV_COLUMNS",
    "ChainConfig",
    "CommSlots",
    "CountingOperator",
    "DTYPES",
    "LivenessError",
    "OPERATOR_NAMES",
    "ProtocolViolation",
    "ScanOperator",
    "ScanProblem",
    "ShapeError",
    "SimConfig",
    "SimOutcome",
    "SpinPolicy",
    "SweepResult",
    "UnsupportedOperatorError",
    "WarpGeometry",
    "balanced_rows",
    "block_count",
    "chained_scan",
    "deadlock_probability_sweep",
    "default_geometry",
    "default_worker_count",
    "down_sweep",
    "dtype_token",
    "format_trace",
    "generate_input",
    "hillis_steele_scan",
    "inter_block_comm",
    "intra_block_global_scan",
    "intra_block_local_scan",
    "intra_warp_local_scan",
    "make_operator",
    "matrix_scan",
    "parse_dtype",
    "partial_tail",
    "run_algorithm",
    "run_bench",
    "run_schedule",
    "sequential_scan",
    "shuffle_up_scan",
    "sweep_deadlocks",
    "up_sweep",
    "validate_output",
    "verify_deadlock",
    "warp_load",
    "work_efficient_scan",
    "write_records",
]
